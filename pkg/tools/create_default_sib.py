"""Generate the bundled default scaling information base."""

# Authors: The espsim developers
# License: AGPL

from pathlib import Path

from espsim.costmodel import (
    CostCoefficients,
    DecodeCoefficients,
    ScalingInfoBase,
    Strategy,
)


def _sequence_parallel(d: int) -> CostCoefficients:
    return CostCoefficients(
        alpha=20.0 + 4.0 * (d - 1),
        beta=0.054 / d + 0.006,
        gamma=3.8e-7 / d + 2e-8,
    )


def _tensor_parallel(k: int) -> CostCoefficients:
    return CostCoefficients(
        alpha=20.0 + 6.0 * (k - 1),
        beta=0.051 / k + 0.009,
        gamma=3.6e-7 / k + 4e-8,
    )


def _hybrid(sp: int, tp: int) -> CostCoefficients:
    dop = sp * tp
    return CostCoefficients(
        alpha=20.0 + 4.0 * (sp - 1) + 6.0 * (tp - 1),
        beta=0.0528 / dop + 0.0072,
        gamma=3.72e-7 / dop + 2.8e-8,
    )


def main() -> None:
    """Write ``espsim/data/sib/default.jsonl``."""
    prefill = {Strategy(d, 1): _sequence_parallel(d) for d in range(1, 17)}
    for k in [2, 4, 8, 16]:
        prefill[Strategy(1, k)] = _tensor_parallel(k)
    for sp, tp in [(2, 2), (2, 4), (2, 8), (4, 2), (4, 4), (8, 2)]:
        prefill[Strategy(sp, tp)] = _hybrid(sp, tp)
    sib = ScalingInfoBase(
        prefill=prefill,
        decode=DecodeCoefficients(alpha=12.0, beta=0.05, gamma=2e-5),
        tipping=400.0,
    )
    out = (
        Path(__file__).parent.parent / "espsim" / "data" / "sib"
        / "default.jsonl"
    )
    sib.save(out, include_samples=False)


if __name__ == "__main__":
    main()
