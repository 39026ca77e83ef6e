import math
from pathlib import Path

from svl.command_utils import SvlCommand
from svl.constants import ZEROSHOT_REPORT_FILE
from svl.data import TripletDataset, load_tensor, read_labels
from svl.exceptions import ConfigError
from svl.export_utils import ZEROSHOT_FIELDS, export_success_message, write_json
from svl.repvli import build_head, load_head
from svl.trainer import evaluate_zeroshot, load_checkpoint


class Command(SvlCommand):
    help = (
        "Zero-shot classification of a labeled manifest with a pretrained encoder. "
        "The head comes from class prompt embeddings (--prompts and --labels) or "
        "from an exported head directory (--head). Prints per-class and top-1 "
        "accuracy and writes zeroshot_report.json."
    )

    def add_arguments(self, parser):
        parser.add_argument(
            "--checkpoint",
            type=str,
            required=True,
            help="Pretrained checkpoint directory.",
        )
        parser.add_argument(
            "--prompts",
            type=str,
            default=None,
            help="K×C SVLT file of class prompt embeddings.",
        )
        parser.add_argument(
            "--labels",
            type=str,
            default=None,
            help="JSON array of the K class names, in prompt order.",
        )
        parser.add_argument(
            "--head",
            type=str,
            default=None,
            help="Exported head directory (head.svlt + head.labels.json).",
        )
        parser.add_argument(
            "--scale",
            type=float,
            default=None,
            help="Head scale for --prompts (default: the checkpoint's learned temperature).",
        )
        parser.add_argument(
            "--data",
            type=str,
            required=True,
            help="Labeled triplet manifest to evaluate.",
        )
        parser.add_argument(
            "--timesteps",
            type=int,
            default=None,
            help="Run the encoder at T timesteps (default: as pretrained).",
        )
        parser.add_argument(
            "--d-max",
            type=int,
            default=None,
            help="Run the encoder with spike bound D (default: as pretrained).",
        )
        parser.add_argument(
            "--workers",
            type=int,
            default=None,
            help="Evaluation threads (default: SVL_THREADS).",
        )
        parser.add_argument(
            "--out",
            type=str,
            default=None,
            help="Report directory (default: the checkpoint directory).",
        )

    def _head(self, options, checkpoint):
        if options["head"]:
            if options["prompts"] or options["labels"]:
                raise ConfigError("give either --head or --prompts/--labels, not both")
            return load_head(options["head"])
        if not (options["prompts"] and options["labels"]):
            raise ConfigError("--prompts and --labels are required without --head")
        scale = options["scale"]
        if scale is None:
            scale = math.exp(checkpoint.log_temp)
        return build_head(
            load_tensor(options["prompts"]), scale, read_labels(options["labels"])
        )

    def run(self, **options):
        checkpoint = load_checkpoint(options["checkpoint"])
        head = self._head(options, checkpoint)

        encoder = checkpoint.encoder
        T = options["timesteps"] or encoder.cfg.T
        d_max = options["d_max"] or encoder.cfg.neuron.d_max
        encoder = encoder.with_run(T, d_max)

        dataset = TripletDataset.from_manifest(options["data"], options["workers"])
        report = evaluate_zeroshot(dataset, encoder, head, options["workers"])

        out = self.output_dir(options["out"], Path(options["checkpoint"]))
        report_path = out / ZEROSHOT_REPORT_FILE
        payload = report.as_dict()
        payload.update({"T": T, "d_max": d_max, "n_classes": head.n_classes})
        write_json(report_path, payload)

        self.write_table(ZEROSHOT_FIELDS, report.rows())
        self.stdout.write(
            f"Top-1 accuracy: {report.top1:.4f} over {report.n_samples} samples (T={T}, D={d_max})"
        )
        self.success(export_success_message(report_path))
