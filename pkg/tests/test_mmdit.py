import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from negtome.exceptions import DimensionError
from negtome.kernel import negtome
from negtome.mmdit import JointTokenMerger, negtome_joint, split_joint


def joint_case(seed, n_text=None):
    rng = np.random.default_rng(seed)
    B, D = int(rng.integers(1, 4)), int(rng.integers(1, 9))
    n_img = int(rng.integers(1, 17))
    n_text = int(rng.integers(0, 9)) if n_text is None else n_text
    base = rng.standard_normal(D)
    joint = (base + 0.5 * rng.standard_normal((B, n_text + n_img, D))).astype(np.float32)
    ref = (base + 0.5 * rng.standard_normal((int(rng.integers(1, 17)), D))).astype(np.float32)
    return joint, n_text, ref


def test_split_examples():
    x = np.zeros((2, 8, 3), np.float32)
    j = split_joint(x, 3)
    assert j.text.shape == (2, 3, 3) and j.img.shape == (2, 5, 3)
    j0 = split_joint(x, 0)
    assert j0.text.shape[1] == 0 and j0.img.tobytes() == x.tobytes()
    with pytest.raises(DimensionError):
        split_joint(x, 8)


@given(st.integers(0, 10**6))
def test_split_concat_roundtrip(seed):
    joint, n_text, _ = joint_case(seed)
    assert split_joint(joint, n_text).concat().tobytes() == joint.tobytes()


@settings(deadline=None)
@given(st.integers(0, 10**6), st.floats(-1, 1), st.floats(0, 1))
def test_text_immutable_and_image_equivalent(seed, alpha, tau):
    joint, n_text, ref = joint_case(seed)
    out = negtome_joint(split_joint(joint, n_text), ref, alpha, tau)
    assert out[:, :n_text].tobytes() == joint[:, :n_text].tobytes()
    alone = negtome(joint[:, n_text:], ref, alpha, tau)
    assert out[:, n_text:].tobytes() == alone.tobytes()


def test_alpha_zero_identity():
    joint, n_text, ref = joint_case(11)
    assert negtome_joint(split_joint(joint, n_text), ref, 0.0).tobytes() == joint.tobytes()


def test_joint_estimator():
    joint, n_text, ref = joint_case(12, n_text=4)
    est = JointTokenMerger(n_text=4, alpha=0.7, tau=0.2).fit(ref)
    expected = negtome_joint(split_joint(joint, 4), ref, 0.7, 0.2)
    assert est.transform(joint).tobytes() == expected.tobytes()
