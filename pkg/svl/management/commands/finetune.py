import json
import math

from svl.command_utils import SvlCommand
from svl.config import load_run_config
from svl.constants import ACCURACY_CURVE_FILE, HEAD_LABELS_FILE
from svl.data import TripletDataset, load_tensor, read_labels, save_tensor
from svl.export_utils import ACCURACY_CURVE_FIELDS, format_float, write_csv
from svl.repvli import build_head
from svl.trainer import (
    AdamWState,
    TrainingRun,
    finetune_loop,
    load_checkpoint,
    save_checkpoint,
)

CLASSIFIER_FILE = "classifier.svlt"


def _curve_rows(history):
    rows = []
    for record in history:
        row = record.as_row()
        rows.append(
            {
                key: row[key] if key == "epoch" or row[key] == "" else format_float(row[key])
                for key in ACCURACY_CURVE_FIELDS
            }
        )
    return rows


class Command(SvlCommand):
    help = (
        "Fine-tune a pretrained encoder with a classification head on the "
        "config's labeled train manifest. Writes the fine-tuned checkpoint, "
        "classifier.svlt and accuracy_curve.csv."
    )

    def add_arguments(self, parser):
        parser.add_argument(
            "--checkpoint",
            type=str,
            required=True,
            help="Pretrained checkpoint directory.",
        )
        parser.add_argument(
            "--config",
            type=str,
            required=True,
            help="Path to the JSON run config (its finetune and data sections are used).",
        )
        parser.add_argument(
            "--out",
            type=str,
            default=None,
            help="Output directory (default: <output_dir>/finetune).",
        )

    def run(self, **options):
        cfg = load_run_config(options["config"])
        ft = cfg.finetune
        train_cfg = ft.train_config(cfg.seed)
        pretrained = load_checkpoint(options["checkpoint"])

        dataset = TripletDataset.from_manifest(cfg.data_path("train_manifest"), cfg.workers)
        eval_dataset = None
        if cfg.data.test_manifest:
            eval_dataset = TripletDataset.from_manifest(
                cfg.data_path("test_manifest"), cfg.workers
            )
        labels = read_labels(cfg.data_path("labels"))

        head_init = None
        if ft.init_from_prompts and cfg.data.prompts:
            head_init = build_head(
                load_tensor(cfg.data_path("prompts")), math.exp(pretrained.log_temp), labels
            )

        run = finetune_loop(
            dataset,
            pretrained.encoder,
            labels,
            train_cfg,
            head_init=head_init,
            freeze_encoder=ft.freeze_encoder,
            eval_dataset=eval_dataset,
        )

        out = self.output_dir(options["out"], cfg.output_path / "finetune")
        save_checkpoint(
            out,
            TrainingRun(run.encoder, pretrained.log_temp, AdamWState(0, {}, {}), ft.epochs),
            train_cfg,
        )
        save_tensor(out / CLASSIFIER_FILE, run.head)
        (out / HEAD_LABELS_FILE).write_text(
            json.dumps(labels, ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
        )
        write_csv(out / ACCURACY_CURVE_FILE, ACCURACY_CURVE_FIELDS, _curve_rows(run.history))

        last = run.history[-1] if run.history else None
        if last is not None:
            test = "-" if last.test_accuracy is None else f"{last.test_accuracy:.4f}"
            self.stdout.write(
                f"Epoch {last.epoch}: loss {last.loss:.6f}, "
                f"train accuracy {last.train_accuracy:.4f}, test accuracy {test}"
            )
        self.success(f"Fine-tuned checkpoint written: {out}")
