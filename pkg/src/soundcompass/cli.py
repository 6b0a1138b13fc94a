"""Command-line frontend: simulation, featurization, extraction, evaluation.

Angles are degrees at this boundary (azimuth from +x, elevation above the
horizon) and radians everywhere inside. Exit codes: 0 success, 1 internal
error, 2 invalid input. SOUNDCOMPASS_SEED provides the default --seed.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .audio_io import MultichannelWaveform, WavFormatError, read_wav, write_wav
from .clues import ClueEmbedding, DoAClue, build_time_varying_clue, encode_cyc_pos, encode_sh
from .extractor import SPEED_OF_SOUND, delay_and_sum
from .fusion import (
    film_fuse,
    finite_difference_check,
    init_fusion_weights,
)
from .metrics import evaluate_extraction, si_snr_i, write_reports_csv
from .roomsim import SimulationError, render_scene_to_dir
from .scenes import SceneValidationError, read_manifest
from .spectral import GaussianWindowParams, make_band_layout, stft
from .spin import spin_forward

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_INVALID = 2

INVALID_INPUT_ERRORS = (
    SceneValidationError,
    WavFormatError,
    SimulationError,
    FileNotFoundError,
    NotADirectoryError,
    json.JSONDecodeError,
    ValueError,
)


class CliError(Exception):
    """Invalid input detected past argparse; maps to exit code 2."""


def _default_seed() -> int:
    raw = os.environ.get("SOUNDCOMPASS_SEED", "0")
    try:
        return int(raw)
    except ValueError:
        raise CliError(f"SOUNDCOMPASS_SEED must be an integer, got {raw!r}")


# ---------------------------------------------------------------------------
# simulate


def _render_one(args):
    index, scene, manifest_dir, out_root = args
    out = Path(out_root) / f"scene_{index}"
    render_scene_to_dir(scene, out, base_dir=manifest_dir)
    return index


def cmd_simulate(args) -> int:
    manifest = Path(args.manifest)
    scenes = read_manifest(manifest)
    if not scenes:
        raise CliError(f"{manifest}: manifest is empty")
    out_root = Path(args.out)
    out_root.mkdir(parents=True, exist_ok=True)
    jobs = [(i, scene, manifest.parent, out_root) for i, scene in enumerate(scenes)]

    failures = []
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            futures = [pool.submit(_render_one, j) for j in jobs]
            for i, fut in enumerate(futures):
                try:
                    fut.result()
                except Exception as e:
                    failures.append((i, e))
                    if not args.keep_going:
                        break
    else:
        for j in jobs:
            try:
                _render_one(j)
            except Exception as e:
                failures.append((j[0], e))
                if not args.keep_going:
                    break

    for i, e in failures:
        print(f"scene_{i}: {e}", file=sys.stderr)
    if failures:
        first = failures[0][1]
        return EXIT_INVALID if isinstance(first, INVALID_INPUT_ERRORS) else EXIT_INTERNAL
    print(f"rendered {len(scenes)} scenes into {out_root}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# featurize


def cmd_featurize(args) -> int:
    wav = read_wav(args.wav)
    if args.hop <= 0 or args.fft <= 0:
        raise CliError("--fft and --hop must be positive")
    window = GaussianWindowParams(mean=0.5, std=0.25, length=args.fft)
    spec = stft(wav, window, args.fft, args.hop)
    feat = spin_forward(spec)

    num_bins = args.fft // 2 + 1
    if args.bands == "default":
        layout = make_band_layout(num_bins, wav.sample_rate, fft_size=args.fft)
    else:
        from .spectral import BandLayout

        layout = BandLayout.from_json(Path(args.bands))
        if layout.num_bins != num_bins:
            raise CliError(
                f"band layout covers {layout.num_bins} bins, STFT has {num_bins}"
            )

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    np.savez(
        out / "spin.npz",
        pairwise=feat.pairwise.astype(np.float32),
        log_mag=feat.log_mag.astype(np.float32),
        num_channels=np.int64(feat.num_channels),
        frame_hop=np.int64(args.hop),
        fft_size=np.int64(args.fft),
        sample_rate=np.int64(wav.sample_rate),
    )
    layout.to_json(out / "bands.json")
    print(
        f"wrote {out / 'spin.npz'} [{feat.pairwise.shape[0]}x{feat.pairwise.shape[1]}"
        f"x{feat.pairwise.shape[2]}] and {out / 'bands.json'} (K={layout.num_bands})"
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# clue


def cmd_clue(args) -> int:
    clue = DoAClue.from_degrees(args.az, args.el)
    if args.kind == "sh":
        emb = encode_sh(clue, args.order)
    else:
        dim = 2 * (args.order + 1) ** 2
        emb = encode_cyc_pos(clue, dim)

    if args.activation is not None:
        if args.frames is None:
            raise CliError("--activation requires --frames")
        activation = np.asarray(json.loads(Path(args.activation).read_text()), dtype=np.float64)
        tv = build_time_varying_clue(emb, activation, args.frames)
        payload = {
            "kind": emb.kind,
            "order": emb.order,
            "matrix": [[round(v, 10) for v in row] for row in tv.matrix.tolist()],
        }
    else:
        payload = json.loads(emb.to_json())
        payload["vector"] = [round(v, 10) for v in payload["vector"]]

    text = json.dumps(payload)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# fuse-check


def cmd_fuse_check(args) -> int:
    rng = np.random.default_rng(args.seed)
    num_bins = 33
    layout = make_band_layout(num_bins, 2000, f_min=80.0)
    if args.bands is not None:
        keep = min(args.bands, layout.num_bands)
        bands = layout.bands[:keep]
        bands[-1] = (bands[-1][0], num_bins - 1)
        from .spectral import BandLayout

        layout = BandLayout(bands, num_bins, 2000, 64)

    weights = init_fusion_weights(layout, dim_clue=18, c_in=16, c_band=6, hidden=12, seed=args.seed)
    worst = 0.0
    for k, bw in enumerate(weights.bands):
        lo, hi = layout.bands[k]
        width = hi - lo + 1
        feat = rng.standard_normal((bw.num_channels, 5, width))
        upstream = rng.standard_normal(feat.shape)
        clue_vec = rng.standard_normal(18)
        rel, _ = finite_difference_check(bw, feat, clue_vec, upstream, num_coords=12, rng=rng)
        worst = max(worst, rel)

        # null modulation: zeroed heads must reproduce the input bit for bit
        bw_null = init_fusion_weights(layout, 18, 16, 6, 12, seed=args.seed).bands[k]
        bw_null.w_gamma[:] = 0.0
        bw_null.b_gamma[:] = 0.0
        bw_null.w_beta[:] = 0.0
        bw_null.b_beta[:] = 0.0
        if not np.array_equal(film_fuse(feat, clue_vec, bw_null), feat):
            print("null-modulation identity FAILED", file=sys.stderr)
            return EXIT_INTERNAL

    print(f"max relative gradient error: {worst:.3e} over {layout.num_bands} bands")
    return EXIT_OK if worst <= 1e-5 else EXIT_INTERNAL


# ---------------------------------------------------------------------------
# extract / evaluate / contour


def _load_scene_dir(scene_dir):
    scene_dir = Path(scene_dir)
    truth_path = scene_dir / "truth.json"
    if not truth_path.exists():
        raise CliError(f"{scene_dir}: no truth.json (is this a simulate output dir?)")
    truth = json.loads(truth_path.read_text(encoding="utf-8"))
    mixture = read_wav(scene_dir / "mixture.wav")
    return scene_dir, truth, mixture


def _array_offsets(truth) -> np.ndarray:
    offsets = np.asarray(truth.get("array_offsets", []), dtype=np.float64)
    if offsets.size == 0:
        raise CliError("truth.json lacks array_offsets")
    return offsets


def _max_lag_s(offsets: np.ndarray) -> float:
    m = offsets.shape[0]
    aperture = 0.0
    for i in range(m):
        for j in range(i + 1, m):
            aperture = max(aperture, float(np.linalg.norm(offsets[i] - offsets[j])))
    return 1.5 * aperture / SPEED_OF_SOUND if aperture > 0 else 16 / 16000


def cmd_extract(args) -> int:
    _, truth, mixture = _load_scene_dir(args.scene)
    offsets = _array_offsets(truth)
    clue = DoAClue.from_degrees(args.az, args.el)
    est = delay_and_sum(mixture, clue, offsets)
    write_wav(est, args.out)
    print(f"wrote {args.out}")
    return EXIT_OK


def _source_reference(scene_dir: Path, truth, j: int) -> MultichannelWaveform:
    if not (0 <= j < len(truth["sources"])):
        raise CliError(f"source {j} out of range; scene has {len(truth['sources'])}")
    direct = read_wav(scene_dir / f"src{j}_direct.wav")
    reverb = read_wav(scene_dir / f"src{j}_reverb.wav")
    return MultichannelWaveform(direct.samples + reverb.samples, direct.sample_rate)


def cmd_evaluate(args) -> int:
    scene_dir, truth, mixture = _load_scene_dir(args.scene)
    est = read_wav(args.est)
    ref = _source_reference(scene_dir, truth, args.source)
    if est.samples.shape != ref.samples.shape:
        raise CliError(
            f"estimate shape {est.samples.shape} != reference {ref.samples.shape}"
        )
    report = evaluate_extraction(
        est,
        ref,
        mixture,
        scene_id=scene_dir.name,
        source_id=str(args.source),
        max_lag_s=_max_lag_s(_array_offsets(truth)),
    )
    write_reports_csv([report], args.out, aggregate=True)
    print(f"wrote {args.out}")
    return EXIT_OK


def _contour_point(payload):
    (d_az, d_el, az_deg, el_deg, scene_dir, j) = payload
    scene_dir = Path(scene_dir)
    truth = json.loads((scene_dir / "truth.json").read_text(encoding="utf-8"))
    mixture = read_wav(scene_dir / "mixture.wav")
    offsets = _array_offsets(truth)
    el = min(max(el_deg + d_el, -90.0), 90.0)
    clue = DoAClue.from_degrees(az_deg + d_az, el)
    est = delay_and_sum(mixture, clue, offsets)
    ref = _source_reference(scene_dir, truth, j)
    return d_az, d_el, si_snr_i(est, ref, mixture)


def cmd_contour(args) -> int:
    scene_dir, truth, _ = _load_scene_dir(args.scene)
    if not (0 <= args.source < len(truth["sources"])):
        raise CliError(f"source {args.source} out of range")
    src = truth["sources"][args.source]
    az_deg = math.degrees(src["azimuth"])
    el_deg = 90.0 - math.degrees(src["polar"])

    steps = int(round(args.span / args.step))
    offsets_deg = [i * args.step for i in range(-steps, steps + 1)]
    grid = [
        (d_az, d_el, az_deg, el_deg, str(scene_dir), args.source)
        for d_az in offsets_deg
        for d_el in offsets_deg
    ]

    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(_contour_point, grid))
    else:
        rows = [_contour_point(g) for g in grid]

    with open(args.out, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["d_az", "d_el", "si_snri_db"])
        for d_az, d_el, v in rows:
            writer.writerow([f"{d_az:.6f}", f"{d_el:.6f}", f"{v:.6f}"])
    print(f"wrote {args.out} ({len(rows)} rows)")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="soundcompass",
        description="Deterministic spatial-audio toolkit: simulate, featurize, steer, evaluate.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="render a JSONL manifest of scenes")
    s.add_argument("--manifest", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--keep-going", action="store_true")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("featurize", help="pairwise spatial features + band layout")
    s.add_argument("--wav", required=True)
    s.add_argument("--fft", type=int, default=512)
    s.add_argument("--hop", type=int, default=256)
    s.add_argument("--bands", default="default")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_featurize)

    s = sub.add_parser("clue", help="direction embedding (JSON)")
    s.add_argument("--az", type=float, required=True, help="azimuth degrees")
    s.add_argument("--el", type=float, required=True, help="elevation degrees above horizon")
    s.add_argument("--order", type=int, default=5)
    s.add_argument("--kind", choices=["sh", "cyc-pos"], default="sh")
    s.add_argument("--activation", default=None, help="JSON array of per-frame weights")
    s.add_argument("--frames", type=int, default=None)
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_clue)

    s = sub.add_parser("fuse-check", help="gradient and identity verification")
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--bands", type=int, default=None)
    s.set_defaults(func=cmd_fuse_check)

    s = sub.add_parser("extract", help="steered delay-and-sum extraction")
    s.add_argument("--scene", required=True)
    s.add_argument("--az", type=float, required=True)
    s.add_argument("--el", type=float, required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_extract)

    s = sub.add_parser("evaluate", help="metric report for an estimate")
    s.add_argument("--est", required=True)
    s.add_argument("--scene", required=True)
    s.add_argument("--source", type=int, required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("contour", help="steering-offset quality grid")
    s.add_argument("--scene", required=True)
    s.add_argument("--source", type=int, required=True)
    s.add_argument("--span", type=float, default=15.0)
    s.add_argument("--step", type=float, default=2.5)
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_contour)

    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "seed", None) is None and hasattr(args, "seed"):
        args.seed = _default_seed()
    try:
        return args.func(args)
    except CliError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    except INVALID_INPUT_ERRORS as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as e:  # internal failure
        print(f"internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
