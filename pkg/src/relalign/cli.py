"""Command-line interface.

Subcommands: ``synth gen``, ``anchors select``, ``relrep compute``,
``retrieve run``, ``pipeline run``, ``bench anchors``. Each reads a JSON
config (``--config``) with optional ``--seed/--k/--m/--out`` overrides.
Exit code 0 on success; on failure the failing stage is named on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .anchors import SelectionConfig, select_anchors, write_anchors
from .embed_store import load_store, unit_normalize
from .errors import RelalignError, SpecInvalid, StageError
from .pipeline import (
    DEFAULT_K,
    BenchConfig,
    PipelineConfig,
    bench_anchors,
    format_bench_table,
    run_pipeline,
)
from .relrep import read_relreps, relrep_batch, write_relreps
from .retrieval import build_index, retrieve_all, write_results
from .synth import SynthSpec, read_pairing, write_synth


def _load_config(path: str) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise SpecInvalid(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise SpecInvalid(f"config is not valid JSON: {exc}") from None


def _apply_overrides(cfg: dict, args: argparse.Namespace, mapping: dict[str, str]) -> dict:
    cfg = dict(cfg)
    for opt, key in mapping.items():
        value = getattr(args, opt)
        if value is not None:
            cfg[key] = value
    for opt in ("seed", "k", "m", "out"):
        if getattr(args, opt) is not None and opt not in mapping:
            raise SpecInvalid(f"--{opt} does not apply to this command")
    return cfg


def _require(cfg: dict, keys: list[str], command: str) -> None:
    missing = [k for k in keys if k not in cfg]
    if missing:
        raise SpecInvalid(f"{command}: config is missing {missing}")


def _cmd_synth_gen(args) -> int:
    cfg = _apply_overrides(_load_config(args.config), args, {"seed": "seed", "out": "out"})
    _require(cfg, ["n_pairs", "latent_dim", "image_dim", "text_dim", "out"], "synth gen")
    out = cfg.pop("out")
    spec = SynthSpec(**cfg)
    paths = write_synth(out, spec)
    print(json.dumps(paths, indent=2))
    return 0


def _maybe_normalized(path: str, modality: str, normalize: bool):
    store = load_store(path, modality)
    return unit_normalize(store) if normalize else store


def _cmd_anchors_select(args) -> int:
    cfg = _apply_overrides(
        _load_config(args.config), args, {"seed": "seed", "m": "m", "out": "out"}
    )
    _require(cfg, ["images", "texts", "aligned", "strategy", "m", "seed", "out"], "anchors select")
    sel = SelectionConfig(
        strategy=cfg["strategy"],
        m=cfg["m"],
        seed=cfg["seed"],
        cluster_modality=cfg.get("cluster_modality", "image"),
        kmeans_iters=cfg.get("kmeans_iters", 25),
        kmeans_restarts=cfg.get("kmeans_restarts", 4),
    )
    normalize = cfg.get("normalize", True)
    modality = sel.cluster_modality
    store_path = cfg["images"] if modality == "image" else cfg["texts"]
    embeddings = _maybe_normalized(store_path, modality, normalize)
    pool = read_pairing(cfg["aligned"])
    anchors = select_anchors(pool, embeddings, sel)
    write_anchors(cfg["out"], anchors, sel)
    print(f"selected {anchors.size} anchors -> {cfg['out']}")
    return 0


def _cmd_relrep_compute(args) -> int:
    cfg = _apply_overrides(_load_config(args.config), args, {"k": "k", "out": "out"})
    _require(cfg, ["store", "modality", "anchors", "k", "out"], "relrep compute")
    from .anchors import read_anchors

    store = _maybe_normalized(cfg["store"], cfg["modality"], cfg.get("normalize", True))
    anchors = read_anchors(cfg["anchors"])
    rels = relrep_batch(store.ids, store, anchors, cfg["k"])
    write_relreps(cfg["out"], store.ids, rels)
    print(f"wrote {len(rels)} relreps -> {cfg['out']}")
    return 0


def _cmd_retrieve_run(args) -> int:
    cfg = _apply_overrides(_load_config(args.config), args, {"out": "out"})
    _require(cfg, ["queries", "corpus", "out"], "retrieve run")
    query_ids, queries = read_relreps(cfg["queries"])
    text_ids, corpus = read_relreps(cfg["corpus"])
    index = build_index(corpus, text_ids)
    results = retrieve_all(
        queries,
        index,
        query_ids,
        depth=cfg.get("depth", 1),
        workers=cfg.get("workers", 1),
    )
    write_results(cfg["out"], results)
    print(f"retrieved for {len(results)} queries -> {cfg['out']}")
    return 0


def _cmd_pipeline_run(args) -> int:
    cfg = _apply_overrides(
        _load_config(args.config), args, {"seed": "seed", "k": "k", "m": "m", "out": "out"}
    )
    report = run_pipeline(PipelineConfig.from_dict(cfg))
    summary = {k: report[k] for k in ("counts", "scores", "provenance") if k in report}
    if "recall_at_1" in report:
        summary["recall_at_1"] = report["recall_at_1"]
    print(json.dumps(summary, indent=2))
    print(f"report -> {Path(cfg['out']) / 'report.json'}")
    return 0


def _cmd_bench_anchors(args) -> int:
    cfg = _apply_overrides(_load_config(args.config), args, {"seed": "seed", "m": "m", "out": "out"})
    _require(cfg, ["spec", "m_values", "out"], "bench anchors")
    if "seed" in cfg:  # override replaces the whole seed sweep
        cfg["seeds"] = [cfg.pop("seed")]
    if "m" in cfg:
        cfg["m_values"] = [cfg.pop("m")]
    bench = BenchConfig(
        spec=SynthSpec(**cfg["spec"]),
        m_values=tuple(cfg["m_values"]),
        strategies=tuple(cfg.get("strategies", ["random"])),
        seeds=tuple(cfg.get("seeds", [0])),
        k=cfg.get("k", DEFAULT_K),
        cluster_modality=cfg.get("cluster_modality", "image"),
        kmeans_iters=cfg.get("kmeans_iters", 25),
        kmeans_restarts=cfg.get("kmeans_restarts", 4),
    )
    report = bench_anchors(bench)
    Path(cfg["out"]).write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
    print(format_bench_table(report))
    print(f"report -> {cfg['out']}")
    return 0


_COMMANDS = {
    ("synth", "gen"): _cmd_synth_gen,
    ("anchors", "select"): _cmd_anchors_select,
    ("relrep", "compute"): _cmd_relrep_compute,
    ("retrieve", "run"): _cmd_retrieve_run,
    ("pipeline", "run"): _cmd_pipeline_run,
    ("bench", "anchors"): _cmd_bench_anchors,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="relalign",
        description="Relative-representation alignment engine for weakly-aligned pair mining",
    )
    groups = parser.add_subparsers(dest="group", required=True)
    seen: dict[str, argparse.ArgumentParser] = {}
    for (group, action), _ in _COMMANDS.items():
        if group not in seen:
            gp = groups.add_parser(group)
            seen[group] = gp
            gp.set_defaults(_sub=gp.add_subparsers(dest="action", required=True))
        sub = seen[group]._defaults["_sub"].add_parser(action)
        sub.add_argument("--config", required=True, help="path to the JSON config")
        sub.add_argument("--seed", type=int, default=None)
        sub.add_argument("--k", type=int, default=None)
        sub.add_argument("--m", type=int, default=None)
        sub.add_argument("--out", default=None)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    command = (args.group, args.action)
    try:
        return _COMMANDS[command](args)
    except StageError as exc:
        print(f"error in stage '{exc.stage}': {exc.cause}", file=sys.stderr)
        return 2
    except RelalignError as exc:
        print(f"error in stage '{args.group} {args.action}': {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error in stage '{args.group} {args.action}': {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
