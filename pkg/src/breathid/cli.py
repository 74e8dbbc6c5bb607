"""Command-line pipeline: one subcommand per stage, one artifact per stage."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import classify, features, gmm, ivector, nn, synth
from .audio import AudioError, energy_normalize, load_wav
from .container import ContainerError, read_container, write_container

log = logging.getLogger("breathid")

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_MISSING = 3
EXIT_MISMATCH = 4
EXIT_DATA = 5
EXIT_TRAINING = 6

KIND_MFCC = 0.0
KIND_CQT = 1.0


class ConfigError(ValueError):
    pass


class DimensionMismatch(ValueError):
    pass


def _fmt(x) -> str:
    return format(float(x), ".17g")


# ---------------------------------------------------------------- manifest helpers

class Corpus:
    """Manifest rows with paths resolved against the manifest's directory."""

    def __init__(self, path):
        self.path = Path(path)
        if not self.path.exists():
            raise FileNotFoundError(f"missing manifest: {self.path}")
        self.rows = synth.read_manifest(self.path)
        self.base = self.path.parent
        self.speakers = sorted({r[1] for r in self.rows})
        self.labels = np.array([self.speakers.index(r[1]) for r in self.rows], dtype=np.int64)
        self.tags = np.array([r[2] for r in self.rows])

    def audio_path(self, i: int) -> Path:
        p = Path(self.rows[i][0])
        return p if p.is_absolute() else self.base / p

    def split(self, tag: str) -> np.ndarray:
        idx = np.flatnonzero(self.tags == tag)
        if idx.size == 0:
            raise ValueError(f"manifest {self.path} has no rows in split {tag!r}")
        return idx


def _feature_list(records: dict, corpus: Corpus, kind: float | None = None) -> list:
    got = records.get("feature.kind")
    if got is None:
        raise ContainerError("container holds no features")
    if kind is not None and float(got[()]) != kind:
        want = "cqt" if kind == KIND_CQT else "mfcc"
        raise DimensionMismatch(f"features container is not of kind {want}")
    feats = [records[f"feat/{i:06d}"] for i in range(len(corpus.rows)) if f"feat/{i:06d}" in records]
    if len(feats) != len(corpus.rows):
        raise DimensionMismatch(f"features container has {len(feats)} utterances, "
                                f"manifest has {len(corpus.rows)}")
    return feats


def _load_ubm(path) -> gmm.DiagonalGmm:
    rec = read_container(path)
    try:
        return gmm.DiagonalGmm(rec["ubm.weights"], rec["ubm.means"], rec["ubm.variances"])
    except KeyError as exc:
        raise ContainerError(f"{path}: not a UBM container (missing {exc})") from exc


def _load_tv(path) -> ivector.TotalVariabilityModel:
    rec = read_container(path)
    try:
        return ivector.TotalVariabilityModel(rec["m"], rec["T"], rec["sigma"])
    except KeyError as exc:
        raise ContainerError(f"{path}: not a total-variability container (missing {exc})") from exc


def _check_dim(what: str, got: int, want: int):
    if got != want:
        raise DimensionMismatch(f"{what}: got dimension {got}, model expects {want}")


# ---------------------------------------------------------------- stages

def cmd_synth(args):
    m = synth.generate_corpus(args.speakers, args.instances, args.rate, args.seed, args.out)
    print(f"wrote {len(m.rows)} files and {m.path}")


def cmd_features(args):
    corpus = Corpus(args.manifest)
    records = {}
    if args.kind == "cqt":
        records["feature.kind"] = KIND_CQT
    else:
        records["feature.kind"] = KIND_MFCC
    cfg_m = features.MfccConfig(args.n_mel, args.n_ceps, not args.no_deltas, args.frame_ms,
                                args.hop_ms, args.pre_emphasis)
    cqt_cfgs = {}
    for i in range(len(corpus.rows)):
        w = energy_normalize(load_wav(corpus.audio_path(i)))
        if args.kind == "cqt":
            cfg = cqt_cfgs.get(w.sample_rate)
            if cfg is None:
                f_max = args.fmax if args.fmax else w.sample_rate / 2.0
                cfg = cqt_cfgs.setdefault(w.sample_rate, features.CqtConfig(
                    w.sample_rate, args.fmin, f_max, args.bins_per_octave))
            records[f"feat/{i:06d}"] = features.cqt_spectrogram(
                w, cfg, args.frame_ms, args.hop_ms).values
        else:
            records[f"feat/{i:06d}"] = features.mfcc_sequence(w, cfg_m)
    if args.kind == "cqt":
        if len(cqt_cfgs) > 1:
            raise DimensionMismatch("corpus mixes sample rates; CQT bin layout would differ")
        cfg = next(iter(cqt_cfgs.values()))
        records.update({"cqt.f_s": cfg.f_s, "cqt.f_0": cfg.f_0, "cqt.f_max": cfg.f_max,
                        "cqt.b": cfg.b, "cqt.freqs": cfg.freqs})
    records.update({"frame_ms": args.frame_ms, "hop_ms": args.hop_ms})
    write_container(args.out, records)
    print(f"wrote {len(corpus.rows)} {args.kind} feature records to {args.out}")


def cmd_train_ubm(args):
    corpus = Corpus(args.manifest)
    feats = _feature_list(read_container(args.features), corpus, KIND_MFCC)
    train = np.vstack([feats[i] for i in corpus.split("train")])
    model = gmm.em_train_gmm(train, args.components, args.iters, args.seed)
    write_container(args.out, {
        "ubm.weights": model.weights, "ubm.means": model.means,
        "ubm.variances": model.variances,
        "ubm.loglik_trace": np.array(model.log_likelihood_trace)})
    print(f"UBM: {args.components} components x {model.dim} dims, "
          f"supervector length {args.components * model.dim}")


def _all_stats(feats, ubm):
    for f in feats[:1]:
        _check_dim("MFCC frames vs UBM", f.shape[1], ubm.dim)
    return [ivector.collect_stats(ubm, f) for f in feats]


def cmd_train_tv(args):
    corpus = Corpus(args.manifest)
    ubm = _load_ubm(args.ubm)
    feats = _feature_list(read_container(args.features), corpus, KIND_MFCC)
    train = corpus.split("train")
    stats = _all_stats([feats[i] for i in train], ubm)
    model = ivector.train_total_variability(stats, ubm, args.dim, args.iters, args.seed)
    write_container(args.out, {"m": model.m, "T": model.T, "sigma": model.sigma,
                               "tv.objective_trace": np.array(model.objective_trace)})
    print(f"total variability matrix {model.T.shape[0]} x {model.R}")


def cmd_extract_ivectors(args):
    corpus = Corpus(args.manifest)
    ubm = _load_ubm(args.ubm)
    tv = _load_tv(args.tv)
    _check_dim("UBM vs total-variability model", ubm.means.size, tv.m.size)
    feats = _feature_list(read_container(args.features), corpus, KIND_MFCC)
    raw = ivector.extract_ivectors(_all_stats(feats, ubm), tv)
    train = corpus.split("train")
    _, mean = ivector.center_length_normalize(raw[train], fit_mean=True)
    normed, _ = ivector.center_length_normalize(raw, fit_mean=False, mean=mean)
    write_container(args.out, {"ivectors.raw": raw, "ivectors": normed, "ivector_mean": mean})
    print(f"extracted {raw.shape[0]} i-vectors of dimension {raw.shape[1]}")


def _ivectors(path, corpus):
    rec = read_container(path)
    if "ivectors" not in rec:
        raise ContainerError(f"{path}: not an i-vector container")
    iv = rec["ivectors"]
    if iv.shape[0] != len(corpus.rows):
        raise DimensionMismatch(f"{path} holds {iv.shape[0]} i-vectors, manifest has "
                                f"{len(corpus.rows)} rows")
    return iv


def cmd_lda(args):
    corpus = Corpus(args.manifest)
    iv = _ivectors(args.ivectors, corpus)
    train = corpus.split("train")
    proj = ivector.lda_fit(iv[train], corpus.labels[train], args.dim)
    write_container(args.out, {"lda_basis": proj.basis, "lda_mean": proj.mean})
    print(f"LDA {proj.basis.shape[0]} -> {proj.basis.shape[1]}")


def _vector_inputs(args, corpus):
    """I-vectors, optionally LDA-projected; returns (vectors, lda records)."""
    iv = _ivectors(args.ivectors, corpus)
    extra = {}
    if getattr(args, "lda", None):
        rec = read_container(args.lda)
        _check_dim("i-vectors vs LDA", iv.shape[1], rec["lda_basis"].shape[0])
        iv = (iv - rec["lda_mean"]) @ rec["lda_basis"]
        extra = {"lda_basis": rec["lda_basis"], "lda_mean": rec["lda_mean"]}
    return iv, extra


def cmd_train_svm(args):
    corpus = Corpus(args.manifest)
    x, extra = _vector_inputs(args, corpus)
    train = corpus.split("train")
    model = classify.train_linear_svm(x[train], corpus.labels[train], args.C, args.epochs,
                                      args.seed, n_classes=len(corpus.speakers))
    write_container(args.out, {"svm.weights": model.weights, "svm.biases": model.biases, **extra})
    acc, _ = classify.evaluate(model, x[train], corpus.labels[train], len(corpus.speakers))
    print(f"SVM training accuracy {acc:.4f}")


def cmd_train_mlp(args):
    corpus = Corpus(args.manifest)
    x, extra = _vector_inputs(args, corpus)
    train = corpus.split("train")
    hidden = [int(h) for h in str(args.hidden).split(",") if h]
    model = classify.train_mlp(x[train], corpus.labels[train], hidden, args.lr, args.momentum,
                               args.decay, args.batch, args.epochs, args.seed,
                               n_classes=len(corpus.speakers))
    records = {}
    for k, (W, b) in enumerate(zip(model.weights, model.biases)):
        records[f"mlp.W{k}"] = W
        records[f"mlp.b{k}"] = b
    records.update(extra)
    write_container(args.out, records)
    acc, _ = classify.evaluate(model, x[train], corpus.labels[train], len(corpus.speakers))
    print(f"MLP training accuracy {acc:.4f}")


def _standardizer(specs):
    stacked = np.hstack(specs)
    mean = stacked.mean(axis=1, keepdims=True)
    std = np.maximum(stacked.std(axis=1, keepdims=True), 1e-8)
    return mean, std


def cmd_train_cnnlstm(args):
    corpus = Corpus(args.manifest)
    specs = _feature_list(read_container(args.features), corpus, KIND_CQT)
    train, val = corpus.split("train"), corpus.split("validation")
    mean, std = _standardizer([specs[i] for i in train])
    norm = [(s - mean) / std for s in specs]
    train_x, train_y = [], []
    for i in train:
        train_x.append(norm[i])
        train_y.append(corpus.labels[i])
        for copy in features.augment(norm[i], args.augment, args.seed * 1_000_003 + int(i),
                                     args.sigma, args.alpha) if args.augment else []:
            train_x.append(copy)
            train_y.append(corpus.labels[i])
    cfg = nn.TrainConfig(n_filters=args.filters, hidden=args.hidden, dropout_rate=args.dropout,
                         rho=args.rho, epsilon=args.epsilon, patience=args.patience,
                         max_epochs=args.max_epochs, seed=args.seed)
    params, history = nn.train_network(train_x, np.array(train_y), [norm[i] for i in val],
                                       corpus.labels[val], len(corpus.speakers), cfg)
    records = dict(params.tensors)
    records.update({"dropout_rate": params.dropout_rate, "input.mean": mean, "input.std": std})
    write_container(args.out, records)
    if args.log:
        with open(args.log, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "train_risk", "val_error"])
            for h in history:
                w.writerow([h.epoch, _fmt(h.train_risk), _fmt(h.val_error)])
    print(f"trained {len(history)} epochs; best validation error "
          f"{min(h.val_error for h in history):.4f}")


# ---------------------------------------------------------------- inference

class LoadedModel:
    """A persisted classifier plus the inputs it expects."""

    def __init__(self, path):
        rec = read_container(path)
        self.records = rec
        if "svm.weights" in rec:
            self.kind = "svm"
            self.model = classify.LinearSvm(rec["svm.weights"], rec["svm.biases"], 0.0)
        elif "mlp.W0" in rec:
            self.kind = "mlp"
            n = sum(1 for k in rec if k.startswith("mlp.W"))
            self.model = classify.Mlp([rec[f"mlp.W{k}"] for k in range(n)],
                                      [rec[f"mlp.b{k}"] for k in range(n)])
        elif "conv.filters" in rec:
            self.kind = "cnnlstm"
            params = nn.NetworkParams({k: rec[k] for k in nn.PARAM_NAMES},
                                      float(rec["dropout_rate"][()]))
            self.model = nn.NetworkClassifier(params)
        else:
            raise ContainerError(f"{path}: not a classifier container")

    @property
    def n_classes(self) -> int:
        if self.kind == "svm":
            return self.model.weights.shape[0]
        if self.kind == "mlp":
            return self.model.biases[-1].shape[0]
        return self.model.params.n_classes

    def inputs(self, args, corpus):
        if self.kind == "cnnlstm":
            if not args.features:
                raise ConfigError("a CNN-LSTM model needs --features (CQT container)")
            specs = _feature_list(read_container(args.features), corpus, KIND_CQT)
            mean, std = self.records["input.mean"], self.records["input.std"]
            _check_dim("spectrogram rows vs network", specs[0].shape[0], mean.shape[0])
            return [(s - mean) / std for s in specs]
        if not args.ivectors:
            raise ConfigError(f"a {self.kind} model needs --ivectors")
        iv = _ivectors(args.ivectors, corpus)
        if "lda_basis" in self.records:
            _check_dim("i-vectors vs LDA", iv.shape[1], self.records["lda_basis"].shape[0])
            iv = (iv - self.records["lda_mean"]) @ self.records["lda_basis"]
        want = (self.model.weights.shape[1] if self.kind == "svm" else self.model.weights[0].shape[1])
        _check_dim("i-vectors vs classifier", iv.shape[1], want)
        return iv

    def scores(self, inputs) -> np.ndarray:
        return self.model.scores(inputs)


def _scored_split(args):
    corpus = Corpus(args.manifest)
    model = LoadedModel(args.model)
    if model.n_classes != len(corpus.speakers):
        raise DimensionMismatch(f"model scores {model.n_classes} speakers, manifest has "
                                f"{len(corpus.speakers)}")
    inputs = model.inputs(args, corpus)
    idx = corpus.split(args.split)
    subset = [inputs[i] for i in idx] if isinstance(inputs, list) else inputs[idx]
    return corpus, idx, np.atleast_2d(model.scores(subset))


def cmd_identify(args):
    corpus, idx, scores = _scored_split(args)
    pred = np.argmax(scores, axis=1)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["path", "speaker", "predicted"])
        for i, p in zip(idx, pred):
            w.writerow([corpus.rows[i][0], corpus.rows[i][1], corpus.speakers[p]])
    print(f"identified {len(idx)} utterances")


def cmd_verify(args):
    corpus, idx, scores = _scored_split(args)
    claims = [args.claim] if args.claim else corpus.speakers
    for c in claims:
        if c not in corpus.speakers:
            raise ValueError(f"unknown claimed speaker {c!r}")
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["path", "speaker", "claimed", "score", "target"])
        for row, i in enumerate(idx):
            for c in claims:
                k = corpus.speakers.index(c)
                w.writerow([corpus.rows[i][0], corpus.rows[i][1], c, _fmt(scores[row, k]),
                            int(corpus.labels[i] == k)])
    print(f"scored {len(idx)} utterances against {len(claims)} claimed speakers")


def write_roc_csv(path, roc: classify.RocCurve) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# auc={_fmt(roc.auc)}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["threshold", "fpr", "tpr"])
        for t, f, p in zip(roc.thresholds, roc.fpr, roc.tpr):
            w.writerow([_fmt(t), _fmt(f), _fmt(p)])


def cmd_evaluate(args):
    corpus, idx, scores = _scored_split(args)
    labels = corpus.labels[idx]
    n = len(corpus.speakers)
    acc, cm = classify.evaluate(lambda s: np.argmax(s, axis=1), scores, labels, n)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "confusion.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["true\\predicted", *corpus.speakers])
        for s, row in zip(corpus.speakers, cm):
            w.writerow([s, *row.tolist()])
    aucs = []
    with open(out / "auc.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["speaker", "auc"])
        for k, s in enumerate(corpus.speakers):
            pos = labels == k
            if not pos.any() or pos.all():
                continue
            roc = classify.roc_auc(scores[:, k], pos)
            write_roc_csv(out / f"roc_{s}.csv", roc)
            aucs.append(roc.auc)
            w.writerow([s, _fmt(roc.auc)])
    mean_auc = float(np.mean(aucs)) if aucs else float("nan")
    with open(out / "metrics.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["metric", "value"])
        w.writerow(["accuracy", _fmt(acc)])
        w.writerow(["mean_auc", _fmt(mean_auc)])
        w.writerow(["n_examples", len(idx)])
    print(f"accuracy {acc:.4f}  mean AUC {mean_auc:.4f}  ({len(idx)} {args.split} utterances)")


# ---------------------------------------------------------------- parser

SEEDED = {"synth", "train-ubm", "train-tv", "train-svm", "train-mlp", "train-cnnlstm"}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="breathid", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_)
        p.set_defaults(func=func)
        p.add_argument("--config", help="JSON file of option values (keys = long option names)")
        if name in SEEDED:
            p.add_argument("--seed", type=int, default=None, help="required")
        return p

    p = add("synth", cmd_synth, "generate a synthetic breath corpus")
    p.add_argument("--speakers", type=int, default=10)
    p.add_argument("--instances", type=int, default=40)
    p.add_argument("--rate", type=int, default=16000)
    p.add_argument("--out", default="corpus")

    p = add("features", cmd_features, "compute MFCC or CQT features for every manifest row")
    p.add_argument("--manifest", required=False)
    p.add_argument("--kind", choices=["mfcc", "cqt"], default="mfcc")
    p.add_argument("--out")
    p.add_argument("--frame-ms", type=float, default=25.0)
    p.add_argument("--hop-ms", type=float, default=10.0)
    p.add_argument("--fmin", type=float, default=27.5)
    p.add_argument("--fmax", type=float, default=None)
    p.add_argument("--bins-per-octave", type=int, default=48)
    p.add_argument("--n-mel", type=int, default=40)
    p.add_argument("--n-ceps", type=int, default=13)
    p.add_argument("--no-deltas", action="store_true")
    p.add_argument("--pre-emphasis", type=float, default=0.97)

    p = add("train-ubm", cmd_train_ubm, "EM-train the universal background model")
    p.add_argument("--features")
    p.add_argument("--manifest")
    p.add_argument("--components", type=int, default=512)
    p.add_argument("--iters", type=int, default=20)
    p.add_argument("--out")

    p = add("train-tv", cmd_train_tv, "EM-train the total variability matrix")
    p.add_argument("--features")
    p.add_argument("--manifest")
    p.add_argument("--ubm")
    p.add_argument("--dim", type=int, default=100,
                   help=f"i-vector dimension (presets {', '.join(map(str, ivector.IVECTOR_PRESETS))})")
    p.add_argument("--iters", type=int, default=10)
    p.add_argument("--out")

    p = add("extract-ivectors", cmd_extract_ivectors, "extract normalized i-vectors")
    p.add_argument("--features")
    p.add_argument("--manifest")
    p.add_argument("--ubm")
    p.add_argument("--tv")
    p.add_argument("--out")

    p = add("lda", cmd_lda, "fit an LDA projection on training i-vectors")
    p.add_argument("--ivectors")
    p.add_argument("--manifest")
    p.add_argument("--dim", type=int, default=49)
    p.add_argument("--out")

    p = add("train-svm", cmd_train_svm, "train a one-vs-rest linear SVM on i-vectors")
    p.add_argument("--ivectors")
    p.add_argument("--manifest")
    p.add_argument("--lda")
    p.add_argument("--C", type=float, default=1.0)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--out")

    p = add("train-mlp", cmd_train_mlp, "train a 1- or 2-hidden-layer MLP on i-vectors")
    p.add_argument("--ivectors")
    p.add_argument("--manifest")
    p.add_argument("--lda")
    p.add_argument("--hidden", default="128", help="comma-separated sizes, e.g. 128 or 128,64")
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--decay", type=float, default=1e-9)
    p.add_argument("--batch", type=int, default=400)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--out")

    p = add("train-cnnlstm", cmd_train_cnnlstm, "train the CNN-LSTM on CQT spectrograms")
    p.add_argument("--features")
    p.add_argument("--manifest")
    p.add_argument("--filters", type=int, default=8)
    p.add_argument("--hidden", type=int, default=64)
    p.add_argument("--dropout", type=float, default=0.4)
    p.add_argument("--rho", type=float, default=0.9)
    p.add_argument("--epsilon", type=float, default=1e-6)
    p.add_argument("--patience", type=int, default=5)
    p.add_argument("--max-epochs", type=int, default=100)
    p.add_argument("--augment", type=int, default=2, help="elastic copies per training example")
    p.add_argument("--sigma", type=float, default=2.0)
    p.add_argument("--alpha", type=float, default=15.0)
    p.add_argument("--out")
    p.add_argument("--log", help="training log CSV")

    for name, func, help_ in (("identify", cmd_identify, "predict the speaker of each utterance"),
                              ("verify", cmd_verify, "target-speaker scores for verification"),
                              ("evaluate", cmd_evaluate, "accuracy, confusion matrix and ROC")):
        p = add(name, func, help_)
        p.add_argument("--model")
        p.add_argument("--manifest")
        p.add_argument("--ivectors")
        p.add_argument("--features")
        p.add_argument("--split", default="test", choices=list(classify.SPLIT_TAGS))
        p.add_argument("--out")
        if name == "verify":
            p.add_argument("--claim", help="score only this claimed speaker")
    return parser


REQUIRED = {
    "synth": ["seed"],
    "features": ["manifest", "out"],
    "train-ubm": ["features", "manifest", "out", "seed"],
    "train-tv": ["features", "manifest", "ubm", "out", "seed"],
    "extract-ivectors": ["features", "manifest", "ubm", "tv", "out"],
    "lda": ["ivectors", "manifest", "out"],
    "train-svm": ["ivectors", "manifest", "out", "seed"],
    "train-mlp": ["ivectors", "manifest", "out", "seed"],
    "train-cnnlstm": ["features", "manifest", "out", "seed"],
    "identify": ["model", "manifest", "out"],
    "verify": ["model", "manifest", "out"],
    "evaluate": ["model", "manifest", "out"],
}


def _subparser(parser, command):
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[command]
    raise KeyError(command)


def parse_args(argv):
    """Parse, merge a --config document underneath the flags, and validate."""
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        sp = _subparser(parser, args.command)
        try:
            with open(args.config) as fh:
                doc = json.load(fh)
        except FileNotFoundError:
            raise
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError("config must be a flat JSON object")
        allowed = {a.dest: a for a in sp._actions
                   if a.dest not in ("help", "config", "func") and a.option_strings}
        values = {}
        for key, value in doc.items():
            dest = key.lstrip("-").replace("-", "_")
            if dest not in allowed:
                raise ConfigError(f"unknown config key {key!r} for {args.command}")
            if isinstance(value, (dict, list)):
                raise ConfigError(f"config key {key!r} must be a scalar")
            action = allowed[dest]
            if action.type is not None and value is not None:
                try:
                    value = action.type(value)
                except (TypeError, ValueError) as exc:
                    raise ConfigError(f"config key {key!r}: {exc}") from exc
            if action.choices is not None and value not in action.choices:
                raise ConfigError(f"config key {key!r}: {value!r} not in {list(action.choices)}")
            values[dest] = value
        sp.set_defaults(**values)
        args = parser.parse_args(argv)
    missing = [f"--{k.replace('_', '-')}" for k in REQUIRED[args.command] if getattr(args, k) is None]
    if missing:
        raise ConfigError(f"{args.command}: missing required option(s) {', '.join(missing)}")
    return args


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        args = parse_args(argv)
    except SystemExit as exc:  # argparse usage errors
        return int(exc.code or 0)
    except ConfigError as exc:
        print(f"breathid: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"breathid: {exc}", file=sys.stderr)
        return EXIT_MISSING
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except ConfigError as exc:
        print(f"breathid: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"breathid: missing artifact: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except DimensionMismatch as exc:
        print(f"breathid: dimension mismatch: {exc}", file=sys.stderr)
        return EXIT_MISMATCH
    except (nn.TrainingError, classify.TrainingError) as exc:
        print(f"breathid: training failed: {exc}", file=sys.stderr)
        return EXIT_TRAINING
    except (ContainerError, AudioError, ValueError, OSError) as exc:
        print(f"breathid: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
