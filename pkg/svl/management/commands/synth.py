from django.conf import settings

from svl.command_utils import SvlCommand
from svl.constants import DEFAULT_EMBED_DIM, DEFAULT_HOLDOUT, DEFAULT_POINTS
from svl.data import synth_triplets


class Command(SvlCommand):
    help = (
        "Generate a synthetic triplet dataset (class-specific point clouds, "
        "orthonormal text embeddings, perturbed image embeddings) and write it "
        "as SVLT files plus manifest.jsonl, train.jsonl and test.jsonl."
    )

    def add_arguments(self, parser):
        parser.add_argument(
            "--classes",
            type=int,
            default=3,
            help="Number of classes (at most 24).",
        )
        parser.add_argument(
            "--per-class",
            type=int,
            default=64,
            help="Samples per class.",
        )
        parser.add_argument(
            "--seed",
            type=int,
            default=None,
            help="Generator seed (default: SVL_DEFAULT_SEED).",
        )
        parser.add_argument(
            "--dim",
            type=int,
            default=DEFAULT_EMBED_DIM,
            help=f"Embedding width C (default: {DEFAULT_EMBED_DIM}).",
        )
        parser.add_argument(
            "--points",
            type=int,
            default=DEFAULT_POINTS,
            help=f"Points per cloud (default: {DEFAULT_POINTS}).",
        )
        parser.add_argument(
            "--holdout",
            type=float,
            default=DEFAULT_HOLDOUT,
            help="Fraction of each class written to test.jsonl (default: 0.25).",
        )
        parser.add_argument(
            "--out",
            type=str,
            required=True,
            help="Directory to write the dataset into.",
        )

    def run(self, **options):
        seed = options["seed"]
        if seed is None:
            seed = settings.SVL_DEFAULT_SEED

        dataset = synth_triplets(
            options["classes"],
            options["per_class"],
            options["dim"],
            seed,
            n_points=options["points"],
        )
        out = self.output_dir(options["out"])
        manifest = dataset.materialize(out, options["holdout"])
        train, test = dataset.split(options["holdout"])

        self.stdout.write(
            f"{len(dataset)} triplets over {len(dataset.class_names)} classes "
            f"({len(train)} train / {len(test)} test), seed {seed}"
        )
        self.success(f"Synthetic dataset written: {manifest}")
