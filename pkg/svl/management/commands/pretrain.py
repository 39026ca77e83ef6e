import csv
from pathlib import Path

from svl.command_utils import SvlCommand
from svl.config import load_run_config
from svl.constants import LOSS_HISTORY_FILE, TRAIN_STATE_FILE
from svl.data import TripletDataset
from svl.encoder import SpikeEncoder
from svl.export_utils import LOSS_HISTORY_FIELDS, format_float, write_csv
from svl.trainer import load_checkpoint, pretrain_loop, save_checkpoint


def _history_rows(history):
    rows = []
    for record in history:
        row = record.as_row()
        rows.append({key: format_float(row[key]) for key in LOSS_HISTORY_FIELDS if key != "epoch"})
        rows[-1]["epoch"] = row["epoch"]
    return rows


def _previous_rows(path: Path, before_epoch: int):
    """Loss rows a resumed run already wrote, up to its checkpoint."""
    if not path.exists():
        return []
    with path.open("r", newline="", encoding="utf-8") as f:
        return [row for row in csv.DictReader(f) if int(row["epoch"]) < before_epoch]


class Command(SvlCommand):
    help = (
        "Pretrain a spiking point-cloud encoder against frozen text and image "
        "embeddings. Writes a checkpoint and loss_history.csv into the run's "
        "output directory."
    )

    def add_arguments(self, parser):
        parser.add_argument(
            "--config",
            type=str,
            required=True,
            help="Path to the JSON run config.",
        )
        parser.add_argument(
            "--out",
            type=str,
            default=None,
            help="Checkpoint directory (default: output_dir from the config).",
        )
        parser.add_argument(
            "--resume",
            action="store_true",
            help="Continue from the checkpoint already in the output directory.",
        )
        parser.add_argument(
            "--save-every",
            type=int,
            default=0,
            help="Also checkpoint every N epochs (default: only at the end).",
        )

    def run(self, **options):
        cfg = load_run_config(options["config"])
        out = self.output_dir(options["out"], cfg.output_path)
        history_path = out / LOSS_HISTORY_FILE

        dataset = TripletDataset.from_manifest(cfg.data_path("train_manifest"), cfg.workers)
        self.stdout.write(f"Loaded {len(dataset)} triplets (C={dataset.dim})")

        resume = None
        previous = []
        if options["resume"] and (out / TRAIN_STATE_FILE).exists():
            resume = load_checkpoint(out)
            previous = _previous_rows(history_path, resume.epoch)
            self.stdout.write(f"Resuming from epoch {resume.epoch}")

        def write_history(run):
            write_csv(history_path, LOSS_HISTORY_FIELDS, previous + _history_rows(run.history))

        save_every = options["save_every"]

        def on_epoch(run):
            if save_every > 0 and run.epoch % save_every == 0:
                save_checkpoint(out, run, cfg.train, cfg.loss)
                write_history(run)

        encoder = SpikeEncoder(cfg.encoder, seed=cfg.seed)
        run = pretrain_loop(dataset, encoder, cfg.loss, cfg.train, resume=resume, on_epoch=on_epoch)
        save_checkpoint(out, run, cfg.train, cfg.loss)
        write_history(run)

        if run.history:
            last = run.history[-1]
            self.stdout.write(
                f"Epoch {last.epoch}: loss {last.total:.6f} "
                f"(text {last.spike_text:.6f}, image {last.spike_image:.6f}, mse {last.mse:.6f})"
            )
        else:
            self.warning("No epochs left to run; checkpoint rewritten unchanged")
        self.success(f"Checkpoint written: {out}")
