"""Command-line entry point: ``hierzoom <subcommand> [options] [section.key=value ...]``.

Exit status is 0 on success, 1 for usage or configuration errors and 2 for
data or file errors; failures print one diagnostic line on stderr.
"""

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .checkpoint import (
    Checkpoint,
    bundle_checkpoint,
    load_checkpoint,
    restore_bundle,
    rng_state,
    save_checkpoint,
)
from .config import RunConfig, load_config
from .errors import BoundsError, ConfigurationError, FormatError, GenerationError, HierZoomError, UsageError
from .imageops import read_pgm, write_pgm_array
from .metrics import format_metrics, write_report
from .synthdata import DatasetSpec, Sample, gen_dataset, load_dataset, read_manifest
from . import train as T

CONFIG_NAME = "config.ini"
MODEL_NAME = "model.hzg"
PRETRAIN_NAME = "pretrained.hzg"

DATA_ERRORS = (FormatError, BoundsError, GenerationError, OSError)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _common(p, config_required):
    p.add_argument("--config", required=config_required, help="config file ([data]/[model]/[train] sections)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int, help="override the seed")
    p.add_argument("overrides", nargs="*", metavar="section.key=value")


def build_parser():
    parser = _Parser(prog="hierzoom", description="Hierarchical zoom-graph lesion classifier.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-data", help="generate a synthetic dataset")
    _common(p, True)
    p.add_argument("--force", action="store_true", help="overwrite an existing dataset")

    p = sub.add_parser("pretrain", help="pretrain the patch CNN")
    _common(p, True)
    p.add_argument("--force", action="store_true")

    p = sub.add_parser("train", help="train the zoom-graph model")
    _common(p, True)
    p.add_argument("--pretrained", help="checkpoint written by pretrain")
    p.add_argument("--force", action="store_true")

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset split")
    _common(p, False)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", default="test", choices=("train", "test"))
    p.add_argument("--teacher", action="store_true", help="grow graphs from labels instead of predictions")

    p = sub.add_parser("infer", help="score one image")
    _common(p, False)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--image", required=True, help="PGM image")

    p = sub.add_parser("visualize", help="write per-level zoom overlays and a graph dump")
    _common(p, False)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--sample", type=int, required=True, help="sample id from the dataset manifest")
    return parser


# ------------------------------------------------------------------ helpers


def _effective_config(args, base=None):
    if args.config:
        cfg = load_config(args.config, ())
    else:
        cfg = base or RunConfig()
    cfg = cfg.with_overrides(args.overrides)
    if args.seed is not None:
        cfg = cfg.with_overrides([f"data.seed={args.seed}" if args.command == "gen-data" else f"train.seed={args.seed}"])
    return cfg.validate()


def _out_dir(args, default):
    out = Path(args.out or default)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _persist_config(cfg, out):
    (out / CONFIG_NAME).write_text(cfg.to_text())


def _refuse_clobber(path, force):
    if path.exists() and not force:
        raise FileExistsError(f"{path} exists; pass --force to overwrite")


def _load_model(args):
    ckpt = load_checkpoint(args.checkpoint)
    if ckpt.meta.get("kind") != "model":
        raise UsageError(f"{args.checkpoint} is not a trained-model checkpoint")
    cfg = _effective_config(args, ckpt.config)
    return restore_bundle(ckpt, cfg.model), cfg


def _find_sample(cfg, sample_id):
    rows = {r[0]: r for r in read_manifest(cfg.data.dir)}
    if sample_id not in rows:
        raise UsageError(f"sample {sample_id} not in {cfg.data.dir}")
    split = rows[sample_id][1]
    return next(s for s in load_dataset(cfg.data.dir, split) if s.id == sample_id)


# -------------------------------------------------------------- subcommands


def cmd_gen_data(args):
    cfg = _effective_config(args)
    out = Path(args.out or cfg.data.dir)
    rows = gen_dataset(DatasetSpec.from_config(cfg.data), out, force=args.force)
    _persist_config(cfg, out)
    parts = []
    for split in ("train", "test"):
        ys = [r[4] for r in rows if r[1] == split]
        parts.append(f"{split}={len(ys)} (benign={ys.count(0)} malignant={ys.count(1)})")
    print(f"wrote {len(rows)} samples to {out}: " + " ".join(parts))


def cmd_pretrain(args):
    cfg = _effective_config(args)
    out = _out_dir(args, "runs/pretrain")
    target = out / PRETRAIN_NAME
    _refuse_clobber(target, args.force)
    samples = load_dataset(cfg.data.dir, "train")
    if not samples:
        raise UsageError(f"no training samples in {cfg.data.dir}")
    res = T.pretrain_from_samples(cfg, samples)
    meta = {
        "kind": "pretrain",
        "losses": res.losses,
        "train_accuracy": res.train_accuracy,
        "heldout_accuracy": res.heldout_accuracy,
    }
    params = {name: t.data.copy() for name, t in res.params.items()}
    save_checkpoint(Checkpoint(cfg, params, meta), target)
    _persist_config(cfg, out)
    for epoch, loss in enumerate(res.losses, 1):
        print(f"pretrain epoch={epoch} loss={loss:.6f}")
    print(f"train_accuracy={res.train_accuracy:.6f} heldout_accuracy={res.heldout_accuracy:.6f}")


def cmd_train(args):
    cfg = _effective_config(args)
    if cfg.model.levels < 2:
        raise ConfigurationError(f"training needs model.levels >= 2 (got {cfg.model.levels})")
    out = _out_dir(args, "runs/train")
    target = out / MODEL_NAME
    _refuse_clobber(target, args.force)
    pretrained = None
    if args.pretrained:
        pre = load_checkpoint(args.pretrained)
        if pre.meta.get("kind") != "pretrain":
            raise UsageError(f"{args.pretrained} is not a pretraining checkpoint")
        pretrained = pre.params
    samples = load_dataset(cfg.data.dir, "train")
    if not samples:
        raise UsageError(f"no training samples in {cfg.data.dir}")
    _persist_config(cfg, out)
    bundle = T.build_bundle(cfg, pretrained)
    history = []
    log_path = out / "train.log"
    log_path.write_text("")

    def on_epoch(stats, rng):
        history.append(
            {"epoch": stats.epoch, "L_graph": stats.l_graph, "L_node": stats.l_node, "total": stats.total,
             "train_auc": stats.train_auc}
        )
        meta = {"kind": "model", "epoch": stats.epoch, "history": history, "rng": rng_state(rng)}
        save_checkpoint(bundle_checkpoint(bundle, cfg, meta), target)
        line = stats.line()
        with log_path.open("a") as fh:
            fh.write(line + "\n")
        print(line, flush=True)

    T.fit(bundle, samples, cfg, on_epoch=on_epoch)
    if cfg.train.epochs == 0:
        save_checkpoint(bundle_checkpoint(bundle, cfg, {"kind": "model", "epoch": 0, "history": []}), target)


def cmd_eval(args):
    bundle, cfg = _load_model(args)
    samples = load_dataset(cfg.data.dir, args.split)
    if not samples:
        raise UsageError(f"no {args.split} samples in {cfg.data.dir}")
    metrics = T.evaluate(bundle, samples, cfg, teacher=args.teacher)
    metrics["split"] = args.split
    out = _out_dir(args, Path(args.checkpoint).parent)
    write_report(metrics, out / f"eval_{args.split}.json")
    _persist_config(cfg, out)
    print(format_metrics(metrics))


def cmd_infer(args):
    bundle, cfg = _load_model(args)
    img = read_pgm(args.image)
    blank = np.zeros(img.shape, dtype=np.uint8)
    res = T.infer(bundle, Sample(-1, "infer", img.pixels, blank, 0), cfg)
    print(f"score={res.y_hat.data[0, 1]:.6f} label={int(res.y_hat.data[0, 1] > 0.5)} nodes={res.graph.num_nodes}")
    if args.out:
        out = _out_dir(args, None)
        (out / "graph.txt").write_text("\n".join(_dump(res)) + "\n")
        _persist_config(cfg, out)


def _zoom_flags(res):
    """Expanded nodes plus deepest-level nodes the head would zoom."""
    flags = set(res.graph.zoomed)
    g = res.graph
    if res.zoom_levels and res.zoom_levels[-1] == g.current_level:
        probs = res.zoom_probs[-1].data
        for node_id, (pn, pz) in zip(g.frontier(), probs):
            if pz > pn:
                flags.add(node_id)
    return flags


def _dump(res):
    return res.graph.dump_lines(_zoom_flags(res))


def overlay(pixels, regions):
    """Invert intensities along the one-pixel border of each region."""
    out = np.array(pixels, dtype=np.float64, copy=True)
    edge = np.zeros(out.shape, dtype=bool)
    for r in regions:
        edge[r.y0, r.x0 : r.x1] = True
        edge[r.y1 - 1, r.x0 : r.x1] = True
        edge[r.y0 : r.y1, r.x0] = True
        edge[r.y0 : r.y1, r.x1 - 1] = True
    out[edge] = 1.0 - out[edge]
    return out


def cmd_visualize(args):
    bundle, cfg = _load_model(args)
    sample = _find_sample(cfg, args.sample)
    res = T.infer(bundle, sample, cfg)
    out = _out_dir(args, Path(args.checkpoint).parent / f"viz_{args.sample:05d}")
    flags = _zoom_flags(res)
    g = res.graph
    for level in range(1, g.current_level + 1):
        regions = [g.nodes[i].region for i in g.level_ids(level) if i in flags]
        img = overlay(sample.image, regions)
        write_pgm_array(np.rint(img * 255).astype(np.int64), out / f"level{level}.pgm", 255)
    (out / "graph.txt").write_text("\n".join(g.dump_lines(flags)) + "\n")
    _persist_config(cfg, out)
    print(f"score={res.y_hat.data[0, 1]:.6f} nodes={g.num_nodes} levels={g.current_level} out={out}")


COMMANDS = {
    "gen-data": cmd_gen_data,
    "pretrain": cmd_pretrain,
    "train": cmd_train,
    "eval": cmd_eval,
    "infer": cmd_infer,
    "visualize": cmd_visualize,
}


def exit_code(exc):
    if isinstance(exc, DATA_ERRORS):
        return 2
    if isinstance(exc, (UsageError, ConfigurationError, HierZoomError)):
        return 1
    return None


def main(argv=None):
    logging.basicConfig(level=logging.WARNING, format="%(message)s")
    try:
        args = build_parser().parse_args(argv)
        COMMANDS[args.command](args)
    except Exception as exc:  # noqa: BLE001 - mapped to exit codes below
        code = exit_code(exc)
        if code is None:
            raise
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"hierzoom: error: {msg}", file=sys.stderr)
        return code
    return 0


if __name__ == "__main__":
    sys.exit(main())
