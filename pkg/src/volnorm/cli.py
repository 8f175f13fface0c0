"""Command-line pipeline: phantom corpus -> IS-Gen training -> normalisation ->
radiomics / slice selection -> random forest tuning, evaluation and ANOVA.

Directory layouts
-----------------
Corpus (``phantom``)::

    DIR/corpus.tsv                    subject, label, n_slices, orientation
    DIR/<subject>/{FLAIR,T1wCE,T2w}.nii, mask.nii, label.txt

Normalised corpus (``normalize``)::

    OUT/manifest.tsv                  one row per written array, with hashes
    OUT/<subject>/{FLAIR,T1wCE,T2w,mask}.volcache

Every output file is written to a temporary name and renamed into place.
The exit status is 0 only when all outputs were written.
"""
from __future__ import annotations

import argparse
import hashlib
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import nifti, volcache
from .config import PipelineConfig, load_config
from .errors import InvalidConfig, VolnormError
from .isgen import IsGenModel, TrainConfig, build_triplets, on_off_train
from .mlkit import (TABLE1_GRID, EvalReport, ForestConfig, anova_two_way, fit_forest,
                    format_grid_table, grid_search, impact_extrapolation,
                    implied_prevalences, kfold_cv, load_forest, save_forest)
from .mlkit.metrics import METRIC_NAMES
from .normalize import SliceImputer, copy_impute_round, isgen_impute_round, normalize_volume
from .phantom import make_subject
from .radiomics import FEATURE_NAMES, extract_all, read_feature_table, write_feature_table
from .selection import baseline_selection, enhanced_selection, write_manifest
from .volume import MODALITIES, Mask3D, Orientation, Volume3D, reorient

__all__ = ["main", "build_parser", "CACHE_ENV"]

CACHE_ENV = "VOLNORM_CACHE_DIR"
ORIENTATIONS = ("Axial", "Sagittal", "Coronal")


class CommandError(VolnormError):
    """A command could not run with the given inputs."""


# -- small helpers -----------------------------------------------------------

def write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f"{path.name}.tmp{os.getpid()}")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _read_tsv(path) -> list[dict[str, str]]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    header = lines[0].split("\t")
    return [dict(zip(header, ln.split("\t"))) for ln in lines[1:] if ln]


def _subjects(corpus: Path) -> list[dict[str, str]]:
    index = corpus / "corpus.tsv"
    if not index.is_file():
        raise CommandError(f"{corpus} is not a phantom corpus (missing corpus.tsv)")
    return _read_tsv(index)


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


# -- phantom -----------------------------------------------------------------

def cmd_phantom(args, cfg: PipelineConfig) -> None:
    """Write ``n`` labelled subjects; labels alternate so classes differ by at most one."""
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(args.seed if args.seed is not None else cfg.seed)
    rows = ["subject\tlabel\tn_slices\torientation"]
    for i in range(args.n):
        label = i % 2
        n_slices = int(rng.choice(cfg.slice_choices))
        orientation = ORIENTATIONS[int(rng.integers(3))]
        seed = int(rng.integers(2 ** 31))
        vols, mask = make_subject(seed, label, n_slices, cfg.size, orientation)
        name = f"sub-{i:03d}"
        sub = out / name
        sub.mkdir(exist_ok=True)
        for m, v in vols.items():
            nifti.write_nifti(v, sub / f"{m}.nii")
        nifti.write_mask(mask, sub / "mask.nii")
        write_text(sub / "label.txt", f"{label}\n")
        rows.append(f"{name}\t{label}\t{n_slices}\t{orientation}")
    write_text(out / "corpus.tsv", "\n".join(rows) + "\n")
    print(f"wrote {args.n} subjects to {out}")


# -- train-isgen -------------------------------------------------------------

def cmd_train_isgen(args, cfg: PipelineConfig) -> None:
    corpus = Path(args.corpus)
    if not corpus.is_dir():
        raise CommandError(f"corpus directory not found: {corpus}")
    if args.modality not in MODALITIES:
        raise CommandError(f"unknown modality {args.modality!r}")
    subjects = _subjects(corpus)
    vols = [nifti.read_nifti(corpus / s["subject"] / f"{args.modality}.nii") for s in subjects]
    vols = [v for v in vols if v.n_slices >= 2 * cfg.d_max + 1]
    if not vols:
        raise CommandError(f"no volume has the {2 * cfg.d_max + 1} slices triplets need")
    n_val_vols = len(vols) // 5 if len(vols) >= 5 else 0
    train_vols, val_vols = vols[:len(vols) - n_val_vols], vols[len(vols) - n_val_vols:]
    train = build_triplets(train_vols, cfg.n_triplets, cfg.seed, cfg.d_max, cfg.image_size)
    val = build_triplets(val_vols, cfg.n_val, cfg.seed + 1, cfg.d_max, cfg.image_size) if val_vols else None
    tcfg = TrainConfig(lam=cfg.lam, on_epochs=cfg.on_epochs, off_epochs=cfg.off_epochs,
                       cycles=cfg.cycles, d_max=cfg.d_max, seed=cfg.seed, lr=cfg.lr,
                       optimizer=cfg.optimizer, warmup_epochs=cfg.warmup_epochs)
    tcfg.validate()
    model = IsGenModel.create(cfg.image_size, cfg.seed, tcfg, args.modality)
    log = on_off_train(model.generator, model.discriminator, train, tcfg, val=val,
                       progress=(lambda r: _log(f"epoch {r.epoch} {r.mode} L_RL={r.l_rl:.5f}"))
                       if args.verbose else None)
    ckpt = Path(args.out)
    ckpt.parent.mkdir(parents=True, exist_ok=True)
    model.save(ckpt)
    IsGenModel.load(ckpt)  # validate what was written
    write_text(args.log or f"{ckpt}.log", log.to_text())
    print(f"trained {len(log.records)} epochs; best epoch {log.best_epoch}; checkpoint {ckpt}")


# -- normalize ---------------------------------------------------------------

class VolumeCache:
    """Content-addressed VOLCACHE store.

    An entry is reused only if it is newer than its input, its bytes still
    hash to the recorded digest, and it decodes; anything else is recomputed.
    """

    def __init__(self, root: Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.reused = 0
        self.computed = 0

    def lookup(self, key: str, input_path: Path):
        entry, digest = self.root / f"{key}.volcache", self.root / f"{key}.sha256"
        if not (entry.is_file() and digest.is_file()):
            return None
        if entry.stat().st_mtime < input_path.stat().st_mtime:
            return None
        if sha256_file(entry) != digest.read_text().strip():
            return None
        try:
            return volcache.load_array(entry)
        except VolnormError:
            return None

    def store(self, key: str, arr: np.ndarray) -> None:
        entry = self.root / f"{key}.volcache"
        volcache.save_array(arr, entry)
        write_text(self.root / f"{key}.sha256", sha256_file(entry) + "\n")


def _load_models(args) -> dict[str, tuple[IsGenModel, str]]:
    models = {}
    for m in MODALITIES:
        if args.model:
            path = Path(args.model)
        elif args.models:
            path = Path(args.models) / f"isgen_{m}.ckpt"
        else:
            raise CommandError("--imputer isgen needs --model or --models")
        if not path.is_file():
            raise CommandError(f"checkpoint not found: {path}")
        models[m] = (IsGenModel.load(path, m), sha256_file(path))
    return models


def _normalize_item(vol: Volume3D, target: int, model=None) -> Volume3D:
    if model is None:
        return normalize_volume(vol, target=target, impute_round=copy_impute_round)
    imputer = SliceImputer(model, (float(vol.data.min()), float(vol.data.max())))
    return normalize_volume(vol, target=target, impute_round=lambda s: isgen_impute_round(s, imputer))


def cmd_normalize(args, cfg: PipelineConfig) -> None:
    src, out = Path(args.inp), Path(args.out)
    subjects = _subjects(src)
    models = _load_models(args) if args.imputer == "isgen" else {}
    cache = VolumeCache(Path(args.cache_dir or os.environ.get(CACHE_ENV) or out / ".cache"))
    rows = ["subject\titem\tinput_sha256\toutput_sha256\tspacing\tlabel"]
    for s in subjects:
        name = s["subject"]
        (out / name).mkdir(parents=True, exist_ok=True)
        for item in MODALITIES + ("mask",):
            path = src / name / f"{item}.nii"
            in_hash = sha256_file(path)
            model, model_hash = models.get(item, (None, "copy"))
            key = hashlib.sha256(f"{in_hash}|{model_hash}|{cfg.target}|v1".encode()).hexdigest()
            if item == "mask":
                m = nifti.read_mask(path)
                vol = Volume3D(m.data.astype(np.float32), m.spacing, m.orientation, "mask")
            else:
                vol = nifti.read_nifti(path)
            arr = cache.lookup(key, path)
            norm_spacing = _normalized_spacing(vol, cfg.target)
            if arr is None:
                norm = _normalize_item(vol, cfg.target, model)
                arr = norm.data
                if item == "mask":
                    arr = (arr >= 0.5).astype(np.float32)
                cache.store(key, arr)
                cache.computed += 1
            else:
                cache.reused += 1
            if arr.shape != (cfg.target,) * 3:
                raise CommandError(f"{name}/{item}: normalised shape {arr.shape}")
            dest = out / name / f"{item}.volcache"
            volcache.save_array(arr, dest)
            spacing = ",".join(repr(v) for v in norm_spacing)
            rows.append(f"{name}\t{item}\t{in_hash}\t{sha256_file(dest)}\t{spacing}\t{s['label']}")
    write_text(out / "manifest.tsv", "\n".join(rows) + "\n")
    print(f"normalised {len(subjects)} subjects: {cache.computed} computed, {cache.reused} reused from cache")


def _normalized_spacing(vol: Volume3D, target: int) -> tuple[float, float, float]:
    """Spacing of :func:`normalize_volume`'s output, without running it."""
    s, r, c = vol.spacing
    n, h, w = vol.shape
    native = Volume3D(np.zeros((1, 1, 1), np.float32),
                      (s * (n - 1) / (target - 1), r * h / target, c * w / target), vol.orientation)
    return reorient(native, Orientation.CORONAL).spacing


# -- loading either corpus kind ----------------------------------------------

def _load_subject(root: Path, name: str, spacing: dict | None):
    """Volumes and mask of one subject from a raw or a normalised corpus."""
    if spacing is None:
        vols = {m: nifti.read_nifti(root / name / f"{m}.nii") for m in MODALITIES}
        return vols, nifti.read_mask(root / name / "mask.nii")
    vols = {m: Volume3D(volcache.load_array(root / name / f"{m}.volcache"), spacing[(name, m)],
                        Orientation.CORONAL, m) for m in MODALITIES}
    mask_arr = volcache.load_array(root / name / "mask.volcache")
    return vols, Mask3D(mask_arr > 0.5, spacing[(name, "mask")], Orientation.CORONAL)


def _corpus_index(root: Path):
    """``(subjects with labels, spacing map or None)`` for either corpus kind."""
    manifest = root / "manifest.tsv"
    if manifest.is_file():
        rows = _read_tsv(manifest)
        spacing = {(r["subject"], r["item"]): tuple(float(v) for v in r["spacing"].split(","))
                   for r in rows}
        labels = {}
        for r in rows:
            labels.setdefault(r["subject"], int(r["label"]))
        return list(labels.items()), spacing
    return [(s["subject"], int(s["label"])) for s in _subjects(root)], None


# -- radiomics and selection -------------------------------------------------

def cmd_radiomics(args, cfg: PipelineConfig) -> None:
    root = Path(args.inp)
    subjects, spacing = _corpus_index(root)
    rows = []
    for name, label in subjects:
        vols, mask = _load_subject(root, name, spacing)
        rows.append((name, label, extract_all(vols, mask, cfg.levels)))
    write_feature_table(args.out, rows)
    print(f"wrote {len(rows)} x {len(FEATURE_NAMES)} features to {args.out}")


def cmd_select(args, cfg: PipelineConfig) -> None:
    root = Path(args.inp)
    subjects, spacing = _corpus_index(root)
    window = args.window or cfg.window
    rows = []
    for name, _ in subjects:
        vols, mask = _load_subject(root, name, spacing)
        if args.mode == "enhanced":
            sel = enhanced_selection(vols["FLAIR"], mask, window)
        else:
            sel = baseline_selection(vols["FLAIR"], window)
        rows.append((name, sel.center, sel.window))
    write_manifest(args.out, rows)
    print(f"selected {window}-slice windows for {len(rows)} subjects")


# -- random forest -----------------------------------------------------------

def _columns(names, spec: str) -> list[int]:
    if spec == "all":
        return list(range(len(names)))
    if spec == "location_shape":
        return list(range(6))
    wanted = [c.strip() for c in spec.split(",")]
    missing = [c for c in wanted if c not in names]
    if missing:
        raise CommandError(f"unknown feature columns: {missing}")
    return [names.index(c) for c in wanted]


def _none(v: str):
    return None if v in ("None", "none", "") else v


def parse_grid(text: str) -> dict[str, list]:
    """``param = v1, v2, ...`` lines; ``None`` allowed where the parameter is optional."""
    casts = {"n_estimators": int, "max_depth": int, "max_leaf_nodes": int,
             "min_samples_split": int, "criterion": str, "class_weight": str}
    grid = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, values = (s.strip() for s in line.split("=", 1))
        if key not in casts:
            raise InvalidConfig(f"unknown grid parameter {key!r}")
        grid[key] = [None if _none(v.strip()) is None else casts[key](v.strip())
                     for v in values.split(",")]
    return grid


def _load_features(path, spec):
    subjects, y, X, names = read_feature_table(path)
    cols = _columns(list(names), spec)
    return X[:, cols], y, tuple(names[i] for i in cols)


def cmd_train_rf(args, cfg: PipelineConfig) -> None:
    X, y, names = _load_features(args.features, args.columns or cfg.features)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    base = ForestConfig(seed=cfg.seed)
    if args.grid:
        grid = TABLE1_GRID if args.grid == "table1" else parse_grid(Path(args.grid).read_text())
        best, table = grid_search(X, y, grid, k=cfg.k, seed=cfg.seed, base=base)
        write_text(out / "grid.tsv", format_grid_table(table))
        print(f"grid search over {len(table)} points; best {best.describe()}")
    else:
        best = base
    forest = fit_forest(X, y, best)
    forest.feature_names = names
    save_forest(forest, out / "forest.json")
    write_text(out / "best_config.txt", best.describe() + "\n")


def cmd_evaluate(args, cfg: PipelineConfig) -> None:
    forest = load_forest(args.forest)
    subjects, y, X, names = read_feature_table(args.features)
    if forest.feature_names:
        cols = _columns(list(names), ",".join(forest.feature_names))
        X = X[:, cols]
    report = kfold_cv(X, y, forest.config, k=args.k or cfg.k, seed=cfg.seed, model=args.model)
    write_text(args.out, report.to_text())
    means = report.means
    print("\t".join(f"{m}={means[m]:.4f}" for m in METRIC_NAMES))


def cmd_anova(args, cfg: PipelineConfig) -> None:
    reports = []
    for path in args.reports:
        reports += EvalReport.from_text(Path(path).read_text(encoding="utf-8"))
    if len(reports) < 2:
        raise CommandError("anova needs at least two model reports")
    values = np.stack([r.matrix() for r in reports])  # model x metric x fold
    table = anova_two_way(values, alpha=args.alpha, names=("Model", "Metric"))
    text = f"# models: {', '.join(r.model for r in reports)}\n" + table.to_text()
    if args.out:
        write_text(args.out, text)
    print(text, end="")


# -- single imputation and impact --------------------------------------------

def _read_slice(path) -> Volume3D:
    vol = nifti.read_nifti(path)
    if vol.n_slices != 1:
        raise CommandError(f"{path}: expected a single-slice volume, got {vol.n_slices} slices")
    return vol


def cmd_impute(args, cfg: PipelineConfig) -> None:
    a, b = (_read_slice(p) for p in args.single)
    if a.shape != b.shape:
        raise CommandError(f"slice shapes differ: {a.shape} vs {b.shape}")
    if args.model:
        model = IsGenModel.load(args.model)
        lo = min(float(a.data.min()), float(b.data.min()))
        hi = max(float(a.data.max()), float(b.data.max()))
        mid = SliceImputer(model, (lo, hi))(a.data[0], b.data[0])
    else:
        mid = a.data[0].copy()
    nifti.write_nifti(a.with_data(np.clip(mid, 0, None)[None]), args.out)
    print(f"wrote intermediate slice to {args.out}")


def cmd_impact(args, cfg: PipelineConfig) -> None:
    if args.prevalence is not None:
        res = impact_extrapolation(args.population, args.prevalence, args.sensitivity, args.specificity)
        print(f"correctly_recommended\t{res.correctly_recommended}")
        print(f"correctly_discouraged\t{res.correctly_discouraged}")
    if args.recommended is not None or args.discouraged is not None:
        check = implied_prevalences(args.population, args.sensitivity, args.specificity,
                                    args.recommended, args.discouraged)
        print(check.report())


# -- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="volnorm", description=__doc__.split("\n\n")[0])
    p.add_argument("--config", help="key = value configuration file")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("phantom", help="generate a labelled phantom corpus")
    c.add_argument("--out", required=True)
    c.add_argument("--n", type=int, default=10)
    c.add_argument("--seed", type=int)
    c.set_defaults(func=cmd_phantom)

    c = sub.add_parser("train-isgen", help="On-Off training of an intermediate slice generator")
    c.add_argument("--corpus", required=True)
    c.add_argument("--modality", required=True)
    c.add_argument("--out", required=True, help="checkpoint path")
    c.add_argument("--log", help="training log path (default: <checkpoint>.log)")
    c.add_argument("--verbose", action="store_true")
    c.set_defaults(func=cmd_train_isgen)

    c = sub.add_parser("normalize", help="normalise a corpus to target-cubed coronal volumes")
    c.add_argument("--in", dest="inp", required=True)
    c.add_argument("--out", required=True)
    c.add_argument("--imputer", choices=("isgen", "copy"), default="isgen")
    c.add_argument("--model", help="one checkpoint for every modality")
    c.add_argument("--models", help="directory holding isgen_<modality>.ckpt")
    c.add_argument("--cache-dir", help=f"cache directory (default ${CACHE_ENV} or OUT/.cache)")
    c.set_defaults(func=cmd_normalize)

    c = sub.add_parser("radiomics", help="extract the 39-feature table")
    c.add_argument("--in", dest="inp", required=True)
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_radiomics)

    c = sub.add_parser("select", help="record classifier slice windows")
    c.add_argument("--in", dest="inp", required=True)
    c.add_argument("--out", required=True)
    c.add_argument("--mode", choices=("enhanced", "baseline"), default="enhanced")
    c.add_argument("--window", type=int)
    c.set_defaults(func=cmd_select)

    c = sub.add_parser("train-rf", help="grid-search and fit a random forest")
    c.add_argument("--features", required=True)
    c.add_argument("--out", required=True)
    c.add_argument("--grid", help="'table1' or a grid file")
    c.add_argument("--columns", help="'all', 'location_shape' or comma-separated names")
    c.set_defaults(func=cmd_train_rf)

    c = sub.add_parser("evaluate", help="k-fold CV report for a saved forest's settings")
    c.add_argument("--forest", required=True)
    c.add_argument("--features", required=True)
    c.add_argument("--out", required=True)
    c.add_argument("--k", type=int)
    c.add_argument("--model", default="forest", help="row label in the report")
    c.set_defaults(func=cmd_evaluate)

    c = sub.add_parser("anova", help="two-way ANOVA over model x metric with folds as replicates")
    c.add_argument("--reports", nargs="+", required=True)
    c.add_argument("--alpha", type=float, default=0.05)
    c.add_argument("--out")
    c.set_defaults(func=cmd_anova)

    c = sub.add_parser("impute", help="synthesise the slice between two single-slice volumes")
    c.add_argument("--single", nargs=2, required=True, metavar=("A", "B"))
    c.add_argument("--model", help="checkpoint; without it the left slice is copied")
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_impute)

    c = sub.add_parser("impact", help="extrapolate sensitivity/specificity to a population")
    c.add_argument("--population", type=int, required=True)
    c.add_argument("--sensitivity", type=float, required=True)
    c.add_argument("--specificity", type=float, required=True)
    c.add_argument("--prevalence", type=float)
    c.add_argument("--recommended", type=int)
    c.add_argument("--discouraged", type=int)
    c.set_defaults(func=cmd_impact)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        args.func(args, cfg)
    except (VolnormError, OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
