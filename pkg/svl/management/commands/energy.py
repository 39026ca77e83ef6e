from pathlib import Path

from svl import autodiff as ad
from svl.command_utils import SvlCommand
from svl.constants import ENERGY_REPORT_FILE, TRACE_HEAD_MAC
from svl.data import load_cloud, tensor_shape
from svl.energy import EnergyModel, TraceRecorder, estimate
from svl.exceptions import DimensionMismatch
from svl.export_utils import ENERGY_FIELDS, export_success_message, write_json
from svl.trainer import load_checkpoint


class Command(SvlCommand):
    help = (
        "Theoretical inference energy of one sample: per-layer FLOPs and firing "
        "rates under the 45nm MAC/AC cost model. Writes energy_report.json."
    )

    def add_arguments(self, parser):
        parser.add_argument(
            "--checkpoint",
            type=str,
            required=True,
            help="Encoder checkpoint directory.",
        )
        parser.add_argument(
            "--sample",
            type=str,
            required=True,
            help="Input cloud: .svlt tensor or event .csv file.",
        )
        parser.add_argument(
            "--prompts",
            type=str,
            default=None,
            help="Prompt embeddings; adds the zero-shot head's MACs to the total.",
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
            "--out",
            type=str,
            default=None,
            help="Report directory (default: the checkpoint directory).",
        )

    def run(self, **options):
        encoder = load_checkpoint(options["checkpoint"]).encoder
        T = options["timesteps"] or encoder.cfg.T
        d_max = options["d_max"] or encoder.cfg.neuron.d_max
        encoder = encoder.with_run(T, d_max)

        recorder = TraceRecorder(d_max)
        with ad.no_grad():
            encoder.forward(load_cloud(options["sample"]), recorder)

        if options["prompts"]:
            shape = tensor_shape(options["prompts"])
            if len(shape) != 2 or shape[1] != encoder.cfg.embed_dim:
                raise DimensionMismatch(
                    f"prompts {list(shape)} do not match encoder width {encoder.cfg.embed_dim}"
                )
            recorder.record_mac("head", shape[0] * shape[1], TRACE_HEAD_MAC)

        report = estimate(recorder.traces(), EnergyModel.for_run(T, d_max))

        out = self.output_dir(options["out"], Path(options["checkpoint"]))
        report_path = out / ENERGY_REPORT_FILE
        payload = report.as_dict()
        payload.update({"timesteps": T, "d_max": d_max, "variant": encoder.cfg.variant})
        write_json(report_path, payload)

        self.write_table(ENERGY_FIELDS, report.rows())
        self.stdout.write(f"Total: {report.total_pj:.3f} pJ ({report.total_joules:.3e} J)")
        if report.saving is not None:
            self.stdout.write(
                f"Dense all-MAC baseline: {report.ann_pj:.3f} pJ, saving {report.saving:.1%}"
            )
        self.success(export_success_message(report_path))
