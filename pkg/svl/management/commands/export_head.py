import math

from svl.command_utils import SvlCommand
from svl.data import load_tensor, read_labels
from svl.exceptions import ConfigError
from svl.repvli import build_head, save_head
from svl.trainer import read_train_state


class Command(SvlCommand):
    help = (
        "Fold class prompt embeddings into a zero-shot head and write "
        "head.svlt and head.labels.json. Django command names use underscores, "
        "so the export-head step is invoked as export_head."
    )

    def add_arguments(self, parser):
        parser.add_argument(
            "--prompts",
            type=str,
            required=True,
            help="K×C SVLT file of class prompt embeddings.",
        )
        parser.add_argument(
            "--labels",
            type=str,
            default=None,
            help="JSON array of the K class names (default: 0..K-1).",
        )
        parser.add_argument(
            "--scale",
            type=float,
            default=None,
            help="Logit scale folded into the head.",
        )
        parser.add_argument(
            "--checkpoint",
            type=str,
            default=None,
            help="Take the scale from this checkpoint's learned temperature instead.",
        )
        parser.add_argument(
            "--out",
            type=str,
            required=True,
            help="Directory to write the head into.",
        )

    def run(self, **options):
        scale = options["scale"]
        if scale is None:
            if not options["checkpoint"]:
                raise ConfigError("give --scale or --checkpoint")
            scale = math.exp(float(read_train_state(options["checkpoint"])["log_temp"]))
        elif options["checkpoint"]:
            raise ConfigError("give either --scale or --checkpoint, not both")

        labels = read_labels(options["labels"]) if options["labels"] else None
        head = build_head(load_tensor(options["prompts"]), scale, labels)
        out = save_head(head, self.output_dir(options["out"]))

        self.stdout.write(f"{head.n_classes} classes × {head.width} at scale {scale:.6g}")
        self.success(f"Head exported: {out}")
