"""Train one ReLU neuron on two NLGP inputs and compare the receptive fields.

High gain (negative excess kurtosis) localizes; low gain (near Gaussian) does not.
Writes an SVG of both final weight vectors next to this script.
"""
import argparse
from pathlib import Path

import numpy as np

from rfloc.harness import svg
from rfloc.metrics import excess_kurtosis, ipr, localization_verdict
from rfloc.nets import TrainConfig, train
from rfloc.stimulus import StimulusModel, substream, task_sample


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--steps", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default=str(Path(__file__).with_suffix(".svg")))
    args = ap.parse_args()

    series = []
    for g in (100.0, 0.01):
        model = StimulusModel.nlgp(40, g, (0.3, 0.7))
        x = task_sample(model, 5000, substream(args.seed, 99)).inputs
        tr = train(model, "single", TrainConfig(tau=0.1, steps=args.steps, batch_size=500,
                                                seed=args.seed, snapshot_stride=args.steps))
        w = tr.final[0]
        print(f"NLGP(g={g:g}): excess kurtosis {excess_kurtosis(x.ravel()):+.2f}, "
              f"IPR {ipr(w):.3f}, {localization_verdict(w)}")
        series.append((f"g={g:g}", np.arange(40), w / np.max(np.abs(w))))
    Path(args.out).write_text(svg.line_plot(series, title="final receptive fields",
                                            xlabel="input dimension i",
                                            ylabel="weight / max |weight|"))
    print("wrote", args.out)


if __name__ == "__main__":
    main()
