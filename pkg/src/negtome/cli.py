"""Command-line interface: ``negtome merge|simulate|interp|metrics``.

Exit codes: 0 success, 1 runtime or validation error, 2 usage error.
Every failure writes one JSON line ``{"error": ..., "message": ...}`` to
stderr.
"""

import argparse
import csv
import io
import json
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import harness, metrics
from .config import load_config
from .exceptions import ConfigurationError, InputError, NegToMeError
from .harness import resize_mask
from .io import load_asset_store, read_tensor, thread_count, write_tensor
from .kernel import negtome


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _fail(kind, message, code):
    sys.stderr.write(json.dumps({"error": kind, "message": str(message)}) + "\n")
    return code


def _parse_alphas(text):
    try:
        return [float(a.replace("−", "-")) for a in text.split(",") if a.strip()]
    except ValueError:
        raise UsageError(f"--alphas must be a comma-separated list of numbers, got {text!r}")


def _write_csv(path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    Path(path).write_text(buf.getvalue())


def _fmt(x):
    return repr(float(x))


def cmd_merge(args):
    src = read_tensor(args.src)
    ref = read_tensor(args.ref)
    if src.ndim != 3:
        raise ConfigurationError(f"source tensor must be rank 3 (B, N, D), got {src.shape}")
    if ref.ndim != 2:
        raise ConfigurationError(f"reference tensor must be rank 2 (N_ref, D), got {ref.shape}")
    mask = None
    if args.mask:
        m = read_tensor(args.mask)
        mask = resize_mask(m, ref.shape[0]) if m.ndim == 2 else m.reshape(-1)
    out, match = negtome(src, ref, args.alpha, args.tau, args.epsilon, mask=mask,
                         return_match=True)
    write_tensor(args.out, out)
    gate = match.gate
    print(json.dumps({
        "tokens": int(gate.size),
        "merged": int(gate.sum()),
        "merged_fraction": float(gate.mean()),
        "mean_max_similarity": float(np.mean(match.max_sim, dtype=np.float64)),
        "per_item_merged": gate.reshape(src.shape[0], -1).sum(axis=1).tolist(),
        "alpha": args.alpha, "tau": args.tau, "epsilon": args.epsilon,
    }))
    return 0


def _assets_for(cfg):
    return load_asset_store(cfg.assets) if cfg.assets else None


def _run_seeds(model, cfg, assets, jobs):
    """Run every (seed, alpha) job; results come back in job order."""
    def one(job):
        seed, alpha = job
        return harness.run(model, cfg.run_for(seed, alpha), assets)

    workers = min(thread_count(), len(jobs))
    if workers <= 1:
        return [one(j) for j in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, jobs))


def _seed_metrics(features, assets):
    row = {"diversity": metrics.pairwise_diversity(list(features)).diversity
           if features.shape[0] >= 2 else None}
    if assets is not None:
        row["max_ref_similarity"] = float(np.mean(
            [metrics.max_ref_similarity(f, assets) for f in features]))
    return row


def cmd_simulate(args):
    cfg = load_config(args.config)
    out = Path(args.out) if args.out else cfg.output
    if out is None:
        raise UsageError("simulate needs --out or an 'output' entry in the config")
    out.mkdir(parents=True, exist_ok=True)
    model = cfg.build_model()
    assets = _assets_for(cfg)
    t0 = time.perf_counter()
    results = _run_seeds(model, cfg, assets, [(s, None) for s in cfg.seeds])
    elapsed = time.perf_counter() - t0

    files, rows = [], []
    for seed, feats in zip(cfg.seeds, results):
        name = f"seed_{seed:06d}.ntf"
        write_tensor(out / name, feats)
        files.append({"seed": seed, "file": name, "shape": list(feats.shape)})
        for metric, value in _seed_metrics(feats, assets).items():
            if value is not None:
                rows.append([seed, _fmt(cfg.run.merge.alpha), metric, _fmt(value)])
    manifest = {"config": cfg.to_dict(), "alpha": cfg.run.merge.alpha,
                "metric_kind": metrics.PROXY_LABEL, "files": files}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    _write_csv(out / "metrics.csv", ["seed", "alpha", "metric", "value"], rows)
    if args.timing:
        Path(args.timing).write_text(json.dumps(
            {"seconds": elapsed, "seeds": len(cfg.seeds)}) + "\n")
    return 0


def cmd_interp(args):
    cfg = load_config(args.config)
    out = Path(args.out) if args.out else cfg.output
    if out is None:
        raise UsageError("interp needs --out or an 'output' entry in the config")
    alphas = _parse_alphas(args.alphas)
    if not alphas:
        raise UsageError("--alphas is empty")
    out.mkdir(parents=True, exist_ok=True)
    model = cfg.build_model()
    assets = _assets_for(cfg)
    jobs = [(s, a) for a in alphas for s in cfg.seeds]
    results = _run_seeds(model, cfg, assets, jobs)
    rows = []
    for (seed, alpha), feats in zip(jobs, results):
        m = _seed_metrics(feats, assets)
        rows.append([_fmt(alpha), seed,
                     "" if m["diversity"] is None else _fmt(m["diversity"]),
                     _fmt(m["max_ref_similarity"]) if "max_ref_similarity" in m else ""])
    _write_csv(out / "interp.csv", ["alpha", "seed", "diversity", "max_ref_similarity"], rows)
    return 0


def _feature_files(directory):
    directory = Path(directory)
    if not directory.is_dir():
        raise InputError(f"features directory {directory} not found")
    files = sorted(directory.glob("*.ntf"))
    if not files:
        raise InputError(f"no .ntf feature files in {directory}")
    provenance = {}
    manifest = directory / "manifest.json"
    if manifest.exists():
        doc = json.loads(manifest.read_text())
        for entry in doc.get("files", []):
            provenance[entry["file"]] = (entry.get("seed"), doc.get("alpha"))
    return files, provenance


def _vectors(t):
    return list(t) if t.ndim == 3 else [t]


def cmd_metrics(args):
    files, provenance = _feature_files(args.features)
    tensors = {f.name: read_tensor(f) for f in files}
    rows = []          # (source, metric, value)
    report = {"mode": args.mode, "metric_kind": metrics.PROXY_LABEL}

    if args.mode == "diversity":
        pooled = [v for t in tensors.values() for v in _vectors(t)]
        rep = metrics.pairwise_diversity(pooled)
        report["pooled"] = {"diversity": rep.diversity,
                            "mean_pairwise_similarity": rep.mean_pairwise_similarity,
                            "n_vectors": len(pooled)}
        per_file = {}
        for name, t in tensors.items():
            if t.ndim == 3 and t.shape[0] >= 2:
                per_file[name] = metrics.pairwise_diversity(list(t)).diversity
                rows.append((name, "diversity", per_file[name]))
        report["per_file"] = per_file
        rows.append(("*", "pooled_diversity", rep.diversity))

    elif args.mode == "entropy":
        labels = _labels_for(args, tensors)
        ent = metrics.label_entropy(labels)
        report.update(ent)
        report["counts"] = {lab: labels.count(lab) for lab in sorted(set(labels))}
        rows.append(("*", "entropy_pooled", ent["pooled"]))
        rows.append(("*", "entropy_mean_over_categories", ent["mean_over_categories"]))

    elif args.mode == "copyright":
        if not args.assets:
            raise UsageError("--mode copyright requires --assets")
        assets = load_asset_store(args.assets)
        per_file = {}
        for name, t in tensors.items():
            scores = [metrics.max_ref_similarity(v, assets, exclude=args.exclude)
                      for v in _vectors(t)]
            per_file[name] = scores
            rows.append((name, "max_ref_similarity", float(np.mean(scores))))
        report["per_file"] = per_file
        report["mean_max_ref_similarity"] = float(np.mean(
            [s for v in per_file.values() for s in v]))
        report["excluded"] = args.exclude

    if args.out and str(args.out).endswith(".csv"):
        table = []
        for source, metric, value in rows:
            seed, alpha = provenance.get(source, ("", ""))
            table.append([source, "" if seed is None else seed,
                          "" if alpha in (None, "") else _fmt(alpha), metric, _fmt(value)])
        _write_csv(args.out, ["source", "seed", "alpha", "metric", "value"], table)
    else:
        text = json.dumps(report, indent=2, sort_keys=True) + "\n"
        if args.out:
            Path(args.out).write_text(text)
        else:
            sys.stdout.write(text)
    return 0


def _labels_for(args, tensors):
    if args.labels:
        mapping = json.loads(Path(args.labels).read_text())
        labels = []
        for name, t in tensors.items():
            if name not in mapping:
                raise InputError(f"no label for feature file {name}")
            lab = mapping[name]
            labels.extend(lab if isinstance(lab, list) else [lab] * len(_vectors(t)))
        return labels
    if args.assets:
        assets = load_asset_store(args.assets)
        return [assets[metrics.nearest_asset(v, assets)].label
                for t in tensors.values() for v in _vectors(t)]
    raise UsageError("--mode entropy requires --labels or --assets")


def build_parser():
    p = _Parser(prog="negtome", description="Negative token merging toolkit.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    m = sub.add_parser("merge", help="merge a source batch away from a reference")
    m.add_argument("src", help="source tensor file (B, N, D)")
    m.add_argument("--ref", required=True, help="reference tensor file (N_ref, D)")
    m.add_argument("--alpha", type=float, default=0.9)
    m.add_argument("--tau", type=float, default=0.7)
    m.add_argument("--epsilon", type=float, default=1e-6)
    m.add_argument("--mask", help="mask tensor: length-N_ref vector or 2-D grid")
    m.add_argument("--out", required=True)
    m.set_defaults(func=cmd_merge)

    s = sub.add_parser("simulate", help="run the toy denoiser for every seed")
    s.add_argument("--config", required=True)
    s.add_argument("--out")
    s.add_argument("--timing", help="optional file for wall-clock timing")
    s.set_defaults(func=cmd_simulate)

    i = sub.add_parser("interp", help="sweep alpha and report diversity/similarity")
    i.add_argument("--config", required=True)
    i.add_argument("--alphas", default="-1,-0.5,0,0.5,1")
    i.add_argument("--out")
    i.set_defaults(func=cmd_interp)

    q = sub.add_parser("metrics", help="score a directory of feature files")
    q.add_argument("--features", required=True)
    q.add_argument("--mode", required=True, choices=["diversity", "entropy", "copyright"])
    q.add_argument("--assets")
    q.add_argument("--labels", help="JSON mapping feature file -> label(s)")
    q.add_argument("--exclude", type=int)
    q.add_argument("--out")
    q.set_defaults(func=cmd_metrics)
    return p


def _join_alphas(argv):
    # "--alphas -1,0" would otherwise be read as a flag
    out, it = [], iter(argv)
    for tok in it:
        if tok == "--alphas":
            out.append("--alphas=" + next(it, ""))
        else:
            out.append(tok)
    return out


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = build_parser().parse_args(_join_alphas(argv))
        if args.command == "interp":
            _parse_alphas(args.alphas)
        return args.func(args)
    except UsageError as e:
        return _fail("usage", e, 2)
    except NegToMeError as e:
        return _fail(type(e).__name__, e, 1)
    except (OSError, IndexError, ValueError, KeyError) as e:
        return _fail(type(e).__name__, e, 1)


if __name__ == "__main__":
    sys.exit(main())
