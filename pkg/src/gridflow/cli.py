"""Command line interface: generate, train, eval, visualize, reproduce.

GRIDFLOW_THREADS caps both BLAS threads and the worker fan-out of
multi-seed generation; it is applied before numpy is imported.
"""
from __future__ import annotations

import argparse
import json
import os
import sys


def _apply_thread_cap():
    cap = os.environ.get("GRIDFLOW_THREADS")
    if not cap:
        return None
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, cap)
    return max(1, int(cap))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="gridflow",
        description="Grid-world destination prediction with attention flow.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="generate trajectory datasets")
    g.add_argument("--preset", help="dataset group name, e.g. "
                   "LINE-SZ32-STP16-NDRP-STD0.2")
    g.add_argument("--seeds", type=int, default=1,
                   help="number of generation seeds (0..seeds-1)")
    g.add_argument("--out", required=True)
    g.add_argument("--n", type=int, help="grid side (custom dataset)")
    g.add_argument("--t", type=int, help="max rollout steps (custom dataset)")
    g.add_argument("--sigma", type=float, help="sampling spread (custom)")
    g.add_argument("--preset-dir", dest="direction", default="line",
                   help="direction function: line|sine|location|history")

    t = sub.add_parser("train", help="train one model on one dataset")
    t.add_argument("--model", required=True)
    t.add_argument("--data", required=True, help="dataset directory")
    t.add_argument("--out", required=True, help="run directory")
    t.add_argument("--epochs", type=int, default=50)
    t.add_argument("--batch", type=int, default=None,
                   help="default 16, or 4 when the grid side is 64")
    t.add_argument("--dims", type=int, default=40)
    t.add_argument("--attn-dims", type=int, default=8)
    t.add_argument("--steps", type=int, default=None,
                   help="propagation steps; defaults to the dataset's T")
    t.add_argument("--seed", type=int, default=0, help="parameter init seed")
    t.add_argument("--shuffle-seed", type=int, default=0)
    t.add_argument("--lr-constant", action="store_true",
                   help="disable the learning-rate decay schedule")

    e = sub.add_parser("eval", help="evaluate selected checkpoints")
    e.add_argument("--run", required=True, help="run directory from train")
    e.add_argument("--split", default="test",
                   choices=["train", "valid", "test"])
    e.add_argument("--out", help="optional metrics JSON path")

    v = sub.add_parser("visualize", help="attention-flow heatmap and traces")
    v.add_argument("--run", required=True)
    v.add_argument("--src", type=int, required=True, help="source node id")
    v.add_argument("--dst", type=int, required=True, help="destination node id")
    v.add_argument("--out", required=True, help="output directory")

    r = sub.add_parser("reproduce",
                       help="generate, train, and eval one table cell")
    r.add_argument("--preset", required=True)
    r.add_argument("--model", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--seeds", type=int, default=1)
    r.add_argument("--epochs", type=int, default=50)
    return p


def cmd_generate(args) -> int:
    from . import data

    if args.preset:
        try:
            data.preset_params(args.preset, seed=0)
        except ValueError:
            print(f"unknown preset {args.preset!r}; valid presets:",
                  file=sys.stderr)
            for name in data.preset_names():
                print(f"  {name}", file=sys.stderr)
            return 2

    header = ("seed", "nodes", "edges", "pairs", "pairs_per_node", "traj_len")
    print("\t".join(header))
    for seed in range(args.seeds):
        if args.preset:
            params = data.preset_params(args.preset, seed=seed)
        else:
            if args.n is None or args.t is None or args.sigma is None:
                print("custom datasets need --n, --t and --sigma",
                      file=sys.stderr)
                return 2
            from .dynamics import DirectionFunction
            params = data.GenParams(
                n_side=args.n, max_steps=args.t, sigma=args.sigma,
                corruption=data.CorruptionParams(0.1, 0.0, seed),
                direction=DirectionFunction.preset(args.direction.lower()),
                seed=seed,
            )
        dataset, trajectories = data.build_dataset(params,
                                                   return_trajectories=True)
        stats = data.dataset_stats(dataset, trajectories)
        outdir = os.path.join(args.out, f"seed{seed}")
        data.save_dataset(outdir, dataset, params, stats)
        print("\t".join([
            str(seed), str(stats.n_nodes), str(stats.n_edges),
            str(stats.n_pairs), f"{stats.pairs_per_node:.2f}",
            f"{stats.traj_length:.2f}",
        ]))
    return 0


def _load_run_pieces(run_dir):
    from . import data, graphnets, training

    with open(os.path.join(run_dir, "config.json")) as f:
        cfg_doc = json.load(f)
    dataset = data.load_dataset(cfg_doc["data"])
    model_cfg = graphnets.ModelConfig.from_name(
        cfg_doc["model"], dims=cfg_doc["dims"], attn_dims=cfg_doc["attn_dims"],
        steps=cfg_doc["steps"],
    )
    gt = graphnets.GraphTensors(dataset.graph)
    model = graphnets.Model(model_cfg, gt, seed=cfg_doc["seed"])
    examples = training.prepare_examples(dataset, gt)
    return cfg_doc, dataset, model, gt, examples


def cmd_train(args) -> int:
    from . import data, graphnets, training

    if not os.path.isdir(args.data):
        print(f"dataset directory {args.data!r} does not exist; run "
              "`gridflow generate` first", file=sys.stderr)
        return 2
    dataset = data.load_dataset(args.data)
    params = data.load_params(args.data)
    batch = args.batch or (4 if params.n_side == 64 else 16)
    steps = args.steps or params.max_steps
    model_cfg = graphnets.ModelConfig.from_name(
        args.model, dims=args.dims, attn_dims=args.attn_dims, steps=steps)
    train_cfg = training.TrainConfig(
        batch_size=batch, epochs=args.epochs, shuffle_seed=args.shuffle_seed,
        snapshot_top_k=min(3, args.epochs) if args.epochs else 3)
    if args.lr_constant:
        train_cfg.lr_end = train_cfg.lr_start

    os.makedirs(args.run_dir, exist_ok=True)
    with open(os.path.join(args.run_dir, "config.json"), "w") as f:
        json.dump({
            "model": model_cfg.name, "data": os.path.abspath(args.data),
            "dims": args.dims, "attn_dims": args.attn_dims, "steps": steps,
            "batch": batch, "epochs": args.epochs, "seed": args.seed,
            "shuffle_seed": args.shuffle_seed,
        }, f, indent=1)

    log_path = os.path.join(args.run_dir, "run.log")
    with open(log_path, "w") as log_file:
        header = "\t".join(["epoch", "lr", "train_loss", "valid_hits1",
                            "valid_hits5", "valid_hits10", "valid_mr",
                            "valid_mrr"])
        log_file.write(header + "\n")
        if model_cfg.core == "rw_stationary":
            log_file.write("# constant_transition\ttrue\n")

        def log(line):
            log_file.write(line + "\n")
            log_file.flush()
            print(line)

        model, result, selected, tests = training.run_experiment(
            model_cfg, train_cfg, dataset, model_seed=args.seed, log=log)

    if not selected:
        print("no snapshots (0 epochs)")
        return 0
    for snap in selected:
        import numpy as np
        np.savez(os.path.join(args.run_dir, f"epoch{snap.epoch}.npz"),
                 **snap.state)
    summary = training.aggregate_runs([tests])
    with open(os.path.join(args.run_dir, "selection.json"), "w") as f:
        json.dump({
            "model": model_cfg.name,
            "selected_epochs": [s.epoch for s in selected],
            "valid": [s.valid.to_json_dict() for s in selected],
            "test": summary,
        }, f, indent=1)
    print(json.dumps(summary["hits1"] | {"metric": "test_hits1"}))
    return 0


def cmd_eval(args) -> int:
    from . import training

    manifest_path = os.path.join(args.run, "selection.json")
    if not os.path.exists(manifest_path):
        print("no selection manifest in run directory; the test split is "
              "only evaluated after snapshot selection", file=sys.stderr)
        return 2
    with open(manifest_path) as f:
        manifest = json.load(f)
    cfg_doc, dataset, model, gt, examples = _load_run_pieces(args.run)
    src, dst = examples[args.split]

    import numpy as np
    reports = []
    for epoch in manifest["selected_epochs"]:
        with np.load(os.path.join(args.run, f"epoch{epoch}.npz")) as f:
            model.load_state_dict(dict(f))
        reports.append(training.evaluate(model, src, dst))
    summary = training.aggregate_runs([reports])
    summary["split"] = args.split
    text = json.dumps(summary, indent=1)
    print(text)
    if args.out:
        with open(args.out, "w") as f:
            f.write(text + "\n")
    return 0


def cmd_visualize(args) -> int:
    from . import training, viz

    manifest_path = os.path.join(args.run, "selection.json")
    if not os.path.exists(manifest_path):
        print("run directory has no selection manifest", file=sys.stderr)
        return 2
    with open(manifest_path) as f:
        manifest = json.load(f)
    cfg_doc, dataset, model, gt, examples = _load_run_pieces(args.run)

    import numpy as np
    best = manifest["selected_epochs"][0]
    with np.load(os.path.join(args.run, f"epoch{best}.npz")) as f:
        model.load_state_dict(dict(f))

    os.makedirs(args.out, exist_ok=True)
    src_idx = int(gt.to_indices(args.src)[0])
    dst_idx = int(gt.to_indices(args.dst)[0])
    if not model.cfg.explicit_flow:
        print("attention flow is unavailable for a regular variant; "
              "writing the implicit-readout heatmap instead")
        by_id, svg = viz.readout_heatmap(model, gt, src_idx, dst_idx)
        with open(os.path.join(args.out, "readout_heatmap.svg"), "w") as f:
            f.write(svg)
        return 0
    focused, flowing, by_id, svg = viz.flow_heatmap(model, gt, src_idx,
                                                    dst_idx)
    viz.write_node_trace(os.path.join(args.out, "trace_nodes.tsv"), gt,
                         focused)
    viz.write_edge_trace(os.path.join(args.out, "trace_edges.tsv"), gt,
                         flowing)
    with open(os.path.join(args.out, "heatmap.svg"), "w") as f:
        f.write(svg)
    print(f"wrote heatmap and traces to {args.out}")
    return 0


def cmd_reproduce(args) -> int:
    from argparse import Namespace

    data_dir = os.path.join(args.out, "data")
    gen = Namespace(preset=args.preset, seeds=args.seeds, out=data_dir,
                    n=None, t=None, sigma=None, direction="line")
    rc = cmd_generate(gen)
    if rc:
        return rc
    for seed in range(args.seeds):
        run_dir = os.path.join(args.out, f"run-seed{seed}")
        tr = Namespace(model=args.model,
                       data=os.path.join(data_dir, f"seed{seed}"),
                       run_dir=run_dir, epochs=args.epochs, batch=None,
                       dims=40, attn_dims=8, steps=None, seed=seed,
                       shuffle_seed=seed, lr_constant=False)
        rc = cmd_train(tr)
        if rc:
            return rc
        rc = cmd_eval(Namespace(run=run_dir, split="test",
                                out=os.path.join(run_dir, "test.json")))
        if rc:
            return rc
    return 0


def main(argv=None) -> int:
    _apply_thread_cap()
    args = build_parser().parse_args(argv)
    if args.command == "train":
        args.run_dir = args.out
    handlers = {
        "generate": cmd_generate,
        "train": cmd_train,
        "eval": cmd_eval,
        "visualize": cmd_visualize,
        "reproduce": cmd_reproduce,
    }
    return handlers[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
