"""Command-line front end.

Every subcommand takes a config file and an output directory (--out,
then the config's io.out_dir, then $VIBEFUSE_OUT, then ./out) and reads
whatever upstream artifacts it needs from that directory.
"""

import argparse
import sys

from . import pipeline
from .config import load_config
from .errors import ConfigError, VibefuseError


def _parser():
    parser = argparse.ArgumentParser(
        prog="vibefuse",
        description="Two-fidelity frequency-response simulation and emulator fusion.",
    )
    parser.add_argument("--config", required=True, help="path to a JSON config file")
    parser.add_argument("--seed", type=int, default=None, help="override the global seed")
    parser.add_argument("--jobs", type=int, default=1, help="worker processes for simulation")
    parser.add_argument("--out", default=None, help="output directory")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("mesh", help="build the model and report size and paired modes")
    sub.add_parser("sample", help="draw the design matrix")
    sub.add_parser("simulate", help="simulate both fidelities over the design")
    sub.add_parser("split", help="draw the nested train/test split")
    train = sub.add_parser("train", help="train one emulator")
    train.add_argument("emulator", choices=["mfdf-cnn", "mlmrgp"])
    sub.add_parser("predict", help="predict test rows with persisted models")
    sub.add_parser("evaluate", help="run the emulator comparison")
    study = sub.add_parser("study", help="run one study")
    study.add_argument("study", choices=["robustness", "hf-fraction", "alpha"])
    sub.add_parser("all", help="run the whole pipeline end to end")
    return parser


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        cfg = load_config(args.config, seed_override=args.seed)
        if args.jobs < 1:
            raise ConfigError(f"--jobs must be positive, got {args.jobs}")
        out_dir = pipeline.resolve_out_dir(args.out, cfg)

        if args.command == "mesh":
            pipeline.stage_mesh(cfg, out_dir)
            print(f"wrote {out_dir}/model_info.json and {out_dir}/modes.csv")
        elif args.command == "sample":
            theta = pipeline.stage_sample(cfg, out_dir)
            print(f"wrote {out_dir}/samples.csv ({theta.shape[0]} rows)")
        elif args.command == "simulate":
            high, low = pipeline.stage_simulate(cfg, out_dir, jobs=args.jobs)
            print(f"wrote {out_dir}/dataset_high.csv and {out_dir}/dataset_low.csv "
                  f"({high.n_rows} rows)")
        elif args.command == "split":
            split = pipeline.stage_split(cfg, out_dir)
            print(f"wrote {out_dir}/split.json "
                  f"(lf={len(split.lf_train_ids)}, hf={len(split.hf_train_ids)}, "
                  f"test={len(split.test_ids)})")
        elif args.command == "train":
            if args.emulator == "mfdf-cnn":
                _, history = pipeline.stage_train_net(cfg, out_dir)
                print(f"wrote {out_dir}/model_mfdfcnn.npz "
                      f"(final epoch loss {history[-1]:.6e})")
            else:
                pipeline.stage_train_gp(cfg, out_dir)
                print(f"wrote {out_dir}/model_mlmrgp.json")
        elif args.command == "predict":
            pipeline.stage_predict(cfg, out_dir)
            print(f"wrote {out_dir}/predictions_mfdfcnn.csv and "
                  f"{out_dir}/predictions_mlmrgp.csv")
        elif args.command == "evaluate":
            result = pipeline.stage_evaluate(cfg, out_dir)
            print(f"wrote {out_dir}/comparison.csv "
                  f"(mean log-MSE: net {result.net_report.mean_log_mse():.3f}, "
                  f"gp {result.gp_report.mean_log_mse():.3f})")
        elif args.command == "study":
            pipeline.stage_study(cfg, out_dir, args.study)
            names = {
                "robustness": "robustness.csv",
                "hf-fraction": "sweep_hf.csv",
                "alpha": "sweep_alpha.csv",
            }
            print(f"wrote {out_dir}/{names[args.study]}")
        elif args.command == "all":
            pipeline.run_all(cfg, out_dir, jobs=args.jobs)
            print(f"pipeline complete; artifacts in {out_dir}")
    except ConfigError as exc:
        print(f"vibefuse: config error: {exc}", file=sys.stderr)
        return 2
    except VibefuseError as exc:
        print(f"vibefuse: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
