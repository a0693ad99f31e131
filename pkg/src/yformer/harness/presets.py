"""Tuned per-(dataset, setting, horizon) hyperparameters.

Everything not listed (kernel sizes, d_model, heads, ...) keeps the library
defaults.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

# dataset horizon history weight_decay lr alpha batch encoder_blocks
_UNIVARIATE = """
ETTh1 24  720 0    0.0001 0.7 32 2
ETTh1 48  720 0    0.0001 0.7 16 4
ETTh1 168 720 0    0.001  0.7 32 4
ETTh1 336 720 0.05 0.0001 0.1 32 4
ETTh1 720 720 0.05 0.0001 0.7 16 2
ETTh2 24  48  0    0.0001 0.7 32 2
ETTh2 48  96  0.02 0.0001 0.3 32 4
ETTh2 168 336 0.02 0.001  0.3 32 2
ETTh2 336 336 0.09 0.0001 0   32 2
ETTh2 720 336 0.09 0.0001 0.7 16 2
ETTm1 24  96  0.02 0.0001 0.7 32 4
ETTm1 48  96  0.02 0.0001 0.7 32 4
ETTm1 96  384 0.02 0.0001 0.1 32 4
ETTm1 288 384 0.02 0.001  0.7 16 2
ETTm1 672 384 0.07 0.001  0.3 16 2
ECL   48  168 0    0.0001 0.7 16 2
ECL   168 168 0.01 0.0001 0.3 16 2
ECL   336 168 0.01 0.0001 0.7 16 2
ECL   720 168 0    0.0001 0.1 16 2
ECL   960 48  0    0.0001 0.5 16 4
"""

_MULTIVARIATE = """
ETTh1 24  48  0    0.0001 0.7 32 3
ETTh1 48  96  0.02 0.001  0.5 32 2
ETTh1 168 168 0.02 0.001  0.7 32 2
ETTh1 336 168 0    0.0001 0.7 32 4
ETTh1 720 336 0.05 0.0001 1   16 2
ETTh2 24  48  0    0.0001 0.7 32 2
ETTh2 48  96  0.02 0.001  0   32 4
ETTh2 168 336 0.09 0.001  0.7 32 2
ETTh2 336 336 0.07 0.001  0.3 32 2
ETTh2 720 336 0    0.0001 0   16 2
ETTm1 24  672 0    0.0001 0.7 32 2
ETTm1 48  96  0    0.0001 0.7 32 4
ETTm1 96  384 0.05 0.0001 0.7 32 4
ETTm1 288 672 0.02 0.001  0.5 16 2
ETTm1 672 672 0.02 0.0001 0.3 16 2
ECL   48  24  0    0.0001 0.7 16 3
ECL   168 48  0    0.0001 0.7 16 3
ECL   336 24  0    0.0001 0.5 16 2
ECL   720 48  0    0.0001 0.7 16 2
ECL   960 336 0    0.0001 0.7 16 2
"""


@dataclass(frozen=True)
class Preset:
    dataset: str
    setting: str
    horizon: int
    history: int
    weight_decay: float
    learning_rate: float
    alpha: float
    batch_size: int
    encoder_blocks: int

    def to_dict(self) -> dict:
        return asdict(self)


def _parse(table: str, setting: str) -> list[Preset]:
    rows = []
    for line in table.strip().splitlines():
        name, horizon, history, wd, lr, alpha, batch, blocks = line.split()
        rows.append(
            Preset(name, setting, int(horizon), int(history), float(wd), float(lr), float(alpha), int(batch), int(blocks))
        )
    return rows


PRESETS: list[Preset] = _parse(_UNIVARIATE, "univariate") + _parse(_MULTIVARIATE, "multivariate")


def find_presets(dataset: str | None = None, horizon: int | None = None, setting: str | None = None) -> list[Preset]:
    return [
        p
        for p in PRESETS
        if (dataset is None or p.dataset.lower() == dataset.lower())
        and (horizon is None or p.horizon == horizon)
        and (setting is None or p.setting == setting)
    ]


def get_preset(dataset: str, horizon: int, setting: str) -> Preset:
    found = find_presets(dataset, horizon, setting)
    if not found:
        raise KeyError(f"no preset for {dataset} {setting} horizon {horizon}")
    return found[0]
