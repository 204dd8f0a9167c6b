"""
Hashing No Supervisado por Tripletas - Aplicación Principal
===========================================================

Interfaz de línea de comandos del flujo completo: ingesta, entrenamiento,
codificación, esquemas de referencia, evaluación, histogramas de
distancias, generación de conjuntos sintéticos y experimentos.

Códigos de salida: 0 éxito, 1 uso o configuración, 2 datos o formato,
3 divergencia numérica.
"""

import argparse
import logging
import os
import sys
from typing import List, Optional

# Agregar el paquete al path de Python
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from triplet_hashing.models.config import PRESETS, RunConfig
from triplet_hashing.models.retrieval import EvalReport
from triplet_hashing.services.data_loader import DataLoader, make_synthetic
from triplet_hashing.services.experiments import EXPERIMENTS, ExperimentData, ExperimentRunner
from triplet_hashing.services.hashing_manager import HashingManager
from triplet_hashing.utils.errors import EXIT_OK, ConfigError, TripletHashingError, exit_code_for


class _Parser(argparse.ArgumentParser):
    """ArgumentParser that reports usage errors as ConfigError instead of exiting."""

    def error(self, message: str):
        raise ConfigError(f"{self.prog}: {message}")


class TripletHashingApp:
    """
    Command-line front end.

    Each command resolves a RunConfig (config file, then preset, then
    ``--set`` pairs, then explicit flags) and runs one pipeline step.
    """

    def __init__(self):
        self.logger = logging.getLogger(__name__)
        self.parser = self.build_parser()

    def build_parser(self) -> argparse.ArgumentParser:
        parser = _Parser(prog="triplet-hashing", description="Unsupervised triplet hashing")
        parser.add_argument("--verbose", action="store_true", help="Debug logging")
        parser.add_argument("--quiet", action="store_true", help="Warnings and errors only")
        commands = parser.add_subparsers(dest="command", required=True)

        def command(name: str, help_text: str) -> argparse.ArgumentParser:
            sub = commands.add_parser(name, help=help_text)
            sub.add_argument("--config", help="key = value configuration file")
            sub.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                             help="Override one configuration key")
            sub.add_argument("--output-dir", help="Output directory")
            sub.add_argument("--seed", type=int, help="Random seed")
            sub.add_argument("--threads", type=int, help="Worker threads, 0 for one per CPU")
            sub.add_argument("--progress", action="store_true", help="Show progress bars")
            return sub

        ingest = command("ingest", "Convert descriptors to the binary format")
        ingest.add_argument("--input", required=True)
        ingest.add_argument("--output", required=True)
        ingest.add_argument("--format", choices=("csv", "binary"))
        ingest.add_argument("--normalize", action="store_true")
        ingest.add_argument("--normalization", help="Ranges file to reuse or record")
        ingest.add_argument("--split", type=float, metavar="TRAIN_FRACTION",
                            help="Keep this fraction in --output, the rest in --test-output")
        ingest.add_argument("--test-output", help="Test part path when splitting")

        train = command("train", "Train an SRBM stack, optionally fine-tuned")
        train.add_argument("--train")
        train.add_argument("--layer-sizes")
        train.add_argument("--preset", help="paper-256|paper-128|paper-64|paper-32, or paper with --bits")
        train.add_argument("--bits", type=int, help="Bitrate selecting the paper preset")
        train.add_argument("--init", choices=("srbm", "uniw"))
        train.add_argument("--finetune", choices=("off", "threshold", "uniform"))

        encode = command("encode", "Hash descriptors with a trained model")
        encode.add_argument("--model", required=True)
        encode.add_argument("--input", required=True)
        encode.add_argument("--output", required=True)
        encode.add_argument("--normalization", help="Ranges recorded at training time")

        baseline = command("fit-baseline", "Fit baseline hashing schemes")
        baseline.add_argument("--train")
        baseline.add_argument("--methods", help="Comma list of lsh,sklsh,sh,pcahash,itq,bpbc")
        baseline.add_argument("--bits", help="Comma list of bitrates")

        evaluate = command("evaluate", "Score codes or descriptors against ground truth")
        evaluate.add_argument("--database")
        evaluate.add_argument("--queries")
        evaluate.add_argument("--ground-truth")
        evaluate.add_argument("--distractors")
        evaluate.add_argument("--recall-at", help="Comma list of R values")
        evaluate.add_argument("--scheme", default="uth")
        evaluate.add_argument("--exclude-self", action="store_true")
        evaluate.add_argument("--normalization", help="Ranges applied to descriptor inputs")

        hist = command("dist-hist", "Match / non-match squared-distance histograms")
        hist.add_argument("--descriptors", required=True)
        hist.add_argument("--match-pairs", required=True)
        hist.add_argument("--nonmatch-pairs", required=True)
        hist.add_argument("--bins", type=int, default=50)

        synthetic = command("make-synthetic", "Write a Gaussian cluster fixture")
        self._synthetic_options(synthetic)

        experiment = command("experiment", "Run a comparative experiment")
        experiment.add_argument("name", choices=EXPERIMENTS)
        experiment.add_argument("--train")
        experiment.add_argument("--database")
        experiment.add_argument("--ground-truth")
        experiment.add_argument("--layer-sizes")
        experiment.add_argument("--bits", help="Comma list of bitrates for the bitrate sweep")
        self._synthetic_options(experiment)
        return parser

    @staticmethod
    def _synthetic_options(sub: argparse.ArgumentParser) -> None:
        sub.add_argument("--clusters", type=int, default=20)
        sub.add_argument("--per-cluster", type=int, default=50)
        sub.add_argument("--dim", type=int, default=128)
        sub.add_argument("--sigma", type=float, default=0.6)
        sub.add_argument("--train-per-cluster", type=int, default=50)
        sub.add_argument("--pairs", type=int, default=1000)

    # ------------------------------------------------------------------

    def resolve_config(self, args: argparse.Namespace) -> RunConfig:
        """
        Build the run configuration from file, preset, ``--set`` pairs and flags.

        Raises:
            ConfigError: Unknown keys, bad values or an unknown preset
        """
        if args.config:
            with open(args.config, "r", encoding="utf-8") as f:
                config = RunConfig.from_text(f.read())
        else:
            config = RunConfig()

        preset = getattr(args, "preset", None)
        if preset:
            if preset == "paper":
                if args.bits is None:
                    raise ConfigError("--preset paper needs --bits")
                preset = f"paper-{args.bits}"
            if preset not in PRESETS:
                raise ConfigError(f"Unknown preset {preset!r}; choose from {sorted(PRESETS)}")
            config.apply_preset(preset)

        for pair in args.set:
            if "=" not in pair:
                raise ConfigError(f"--set expects KEY=VALUE, got {pair!r}")
            key, value = pair.split("=", 1)
            config.set_value(key.strip(), value.strip())

        flags = {
            "output_dir": "output_dir",
            "seed": "seed",
            "threads": "threads",
            "train": "train_path",
            "database": "database_path",
            "queries": "query_path",
            "ground_truth": "ground_truth_path",
            "distractors": "distractor_path",
            "layer_sizes": "layer_sizes",
            "init": "init",
            "finetune": "finetune",
            "methods": "methods",
            "recall_at": "recall_at",
        }
        for flag, key in flags.items():
            value = getattr(args, flag, None)
            if value is not None:
                config.set_value(key, value)
        if args.progress:
            config.set_value("progress", True)
        if getattr(args, "exclude_self", False):
            config.set_value("exclude_self", True)
        if args.command in ("fit-baseline", "experiment") and args.bits:
            config.set_value("bits", args.bits)
        return config

    def run(self, argv: Optional[List[str]] = None) -> int:
        """
        Parse arguments and run one command.

        Args:
            argv (Optional[List[str]]): Arguments, sys.argv[1:] when None

        Returns:
            int: Process exit code
        """
        try:
            args = self.parser.parse_args(argv)
            self.configure_logging(args)
            config = self.resolve_config(args)
            handler = getattr(self, "cmd_" + args.command.replace("-", "_"))
            handler(args, config)
            return EXIT_OK
        except (TripletHashingError, FileNotFoundError) as e:
            self.logger.error(f"{type(e).__name__}: {e}")
            print(f"error: {e}", file=sys.stderr)
            return exit_code_for(e)

    def configure_logging(self, args: argparse.Namespace) -> None:
        level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
        logging.basicConfig(
            level=level,
            format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
        )
        logging.getLogger().setLevel(level)

    # ------------------------------------------------------------------
    # Comandos

    def cmd_ingest(self, args: argparse.Namespace, config: RunConfig) -> None:
        loader = DataLoader()
        dataset = loader.ingest(args.input, args.output, args.format, args.normalize, args.normalization)
        if args.split is not None:
            if not args.test_output:
                raise ConfigError("--split needs --test-output")
            loader.split_file(args.output, args.output, args.test_output, args.split, config.seed)
        HashingManager(config).echo_config()
        print(f"Ingested {dataset.count} descriptors of dim {dataset.dim} into {args.output}")

    def cmd_train(self, args: argparse.Namespace, config: RunConfig) -> None:
        paths = HashingManager(config).train()
        print(f"Model written to {paths['model']}")

    def cmd_encode(self, args: argparse.Namespace, config: RunConfig) -> None:
        if args.normalization is None:
            self.logger.warning(
                "No --normalization given; descriptors are encoded unscaled. "
                "Pass the norm.csv written at training time unless the input is already in [0, 1]"
            )
        codes = HashingManager(config).encode(args.model, args.input, args.output, args.normalization)
        print(f"Encoded {codes.count} descriptors into {codes.n_bits}-bit codes at {args.output}")

    def cmd_fit_baseline(self, args: argparse.Namespace, config: RunConfig) -> None:
        paths = HashingManager(config).fit_baselines()
        for label, path in paths.items():
            print(f"{label}: {path}")

    def cmd_evaluate(self, args: argparse.Namespace, config: RunConfig) -> None:
        report = HashingManager(config).evaluate(args.scheme, args.normalization)
        print(report.to_frame().to_string(index=False))

    def cmd_dist_hist(self, args: argparse.Namespace, config: RunConfig) -> None:
        histogram = HashingManager(config).distance_histogram(
            args.descriptors, args.match_pairs, args.nonmatch_pairs, args.bins
        )
        print(f"Wrote {len(histogram.match_counts)} bins to {config.output_dir}")

    def _synthetic_kwargs(self, args: argparse.Namespace, config: RunConfig) -> dict:
        return {
            "n_clusters": args.clusters,
            "per_cluster": args.per_cluster,
            "dim": args.dim,
            "sigma": args.sigma,
            "train_per_cluster": args.train_per_cluster,
            "n_match_pairs": args.pairs,
            "seed": config.seed,
        }

    def cmd_make_synthetic(self, args: argparse.Namespace, config: RunConfig) -> None:
        manager = HashingManager(config)
        paths = manager.data_loader.create_synthetic_dataset(
            config.output_dir, **self._synthetic_kwargs(args, config)
        )
        manager.echo_config()
        for role, path in paths.items():
            print(f"{role}: {path}")

    def cmd_experiment(self, args: argparse.Namespace, config: RunConfig) -> None:
        manager = HashingManager(config)
        if config.train_path and config.database_path and config.ground_truth_path:
            data = ExperimentData.prepare(
                manager.data_loader.load(config.train_path),
                manager.data_loader.load(config.database_path),
                manager.file_handler.load_ground_truth(config.ground_truth_path),
            )
        else:
            data = ExperimentData.from_fixture(make_synthetic(**self._synthetic_kwargs(args, config)))
        result = ExperimentRunner(config, manager).run(args.name, data)
        frame = result.to_frame() if isinstance(result, EvalReport) else result
        print(frame.to_string(index=False))


def main():
    """Punto de entrada principal."""
    app = TripletHashingApp()
    sys.exit(app.run())


if __name__ == "__main__":
    main()
