#!/usr/bin/env python3
"""Performance benchmark for ocean-fm codec, sampling, model and inference hot paths."""

from __future__ import annotations

import argparse
import time

import torch

from ocean_fm.baselines.trees import TreeRegressor
from ocean_fm.config import get_profile
from ocean_fm.data.codec import decode_tile, encode_tile
from ocean_fm.data.synth import SynthConfig, gen_labeled_dataset, gen_tiles
from ocean_fm.data.tiles import BandSet
from ocean_fm.evaluation.inference import tiled_inference
from ocean_fm.ingestion.sampling import SampleBudget, balanced_sample
from ocean_fm.models.encoder import patchify, random_mask, seeded_init
from ocean_fm.models.mae import MaskedAutoencoder

REGIONS = ["NATL", "SATL", "NPAC", "SPAC", "INDI"]


def _cell(i: int) -> tuple[str, int]:
    return REGIONS[i % len(REGIONS)], 1 + (i // len(REGIONS)) % 12


# ── Benchmarks ────────────────────────────────────────────────────────


def bench_codec(tiles: int) -> tuple[float, float]:
    batch = gen_tiles(SynthConfig(seed=0, cloud_fraction=0.3), tiles)
    start = time.perf_counter()
    for tile in batch:
        decode_tile(encode_tile(tile))
    elapsed = time.perf_counter() - start
    return elapsed, tiles / max(elapsed, 1e-9)


def bench_balanced_sample(candidates: int, per_region: int) -> tuple[float, int]:
    budget = SampleBudget.uniform(REGIONS, per_region, excluded=frozenset())
    start = time.perf_counter()
    result = balanced_sample(list(range(candidates)), budget, seed=0, key=_cell)
    elapsed = time.perf_counter() - start
    return elapsed, len(result.selected)


def bench_patchify(repeats: int) -> float:
    x = torch.randn(17, 42, 42, generator=torch.Generator().manual_seed(0))
    start = time.perf_counter()
    for _ in range(repeats):
        patchify(x, 2)
    return time.perf_counter() - start


@torch.no_grad()
def bench_mae_forward(profile_name: str, batch: int, repeats: int) -> tuple[float, float]:
    profile = get_profile(profile_name, in_channels=16)
    with seeded_init(0):
        model = MaskedAutoencoder(profile).eval()
    images = torch.randn(batch, 16, profile.input_size, profile.input_size)
    plans = [random_mask(profile.num_tokens, 0.75, i) for i in range(batch)]
    model(images, plans)  # warmup

    start = time.perf_counter()
    for _ in range(repeats):
        model(images, plans)
    elapsed = time.perf_counter() - start
    return elapsed, (elapsed / max(repeats, 1)) * 1000


def bench_tree_inference(patches: int, scene: int, trees: int) -> dict[str, float]:
    dataset = gen_labeled_dataset(SynthConfig(seed=1), patches)
    start = time.perf_counter()
    model = TreeRegressor.fit(dataset, BandSet.olci(), n_trees=trees, seed=0)
    fit_elapsed = time.perf_counter() - start

    planes = gen_tiles(SynthConfig(seed=2, size=scene), 1)[0].planes
    start = time.perf_counter()
    plane = tiled_inference(model.predict_window, planes)
    infer_elapsed = time.perf_counter() - start
    return {
        "fit": fit_elapsed,
        "infer": infer_elapsed,
        "pixels_per_sec": plane.size / max(infer_elapsed, 1e-9),
    }


# ── Main ──────────────────────────────────────────────────────────────


def main() -> None:
    parser = argparse.ArgumentParser(description="Benchmark ocean-fm hot paths.")
    parser.add_argument("--tiles", type=int, default=500)
    parser.add_argument("--repeats", type=int, default=20)
    parser.add_argument("--profile", default="desk")
    parser.add_argument("--threads", type=int, default=1)
    args = parser.parse_args()
    torch.set_num_threads(args.threads)

    print("ocean_fm_hot_path_benchmark")
    print(f"tiles={args.tiles}")
    print(f"repeats={args.repeats}")
    print(f"profile={args.profile}")
    print()

    # 1. OCT1 encode + decode
    codec_elapsed, codec_tps = bench_codec(args.tiles)
    print(f"codec_round_trip_seconds={codec_elapsed:.6f}")
    print(f"codec_tiles_per_sec={codec_tps:.0f}")
    print()

    # 2. Balanced sampling over a large candidate pool
    sample_elapsed, selected = bench_balanced_sample(200 * args.tiles, 12 * args.tiles // 10)
    print(f"balanced_sample_seconds={sample_elapsed:.6f}")
    print(f"balanced_sample_selected={selected}")
    print()

    # 3. Patchify (17 bands, 42x42)
    print(f"patchify_seconds={bench_patchify(args.repeats * 50):.6f}")
    print()

    # 4. MAE forward pass
    mae_elapsed, mae_avg_ms = bench_mae_forward(args.profile, 8, args.repeats)
    print(f"mae_forward_total_seconds={mae_elapsed:.6f}")
    print(f"mae_forward_avg_ms={mae_avg_ms:.4f}")
    print()

    # 5. Tree baseline fit + tiled inference on a 210x210 scene
    trees = bench_tree_inference(40, 210, 20)
    print(f"trees_fit_seconds={trees['fit']:.6f}")
    print(f"tiled_inference_seconds={trees['infer']:.6f}")
    print(f"tiled_inference_pixels_per_sec={trees['pixels_per_sec']:.0f}")


if __name__ == "__main__":
    main()
