# -*- coding: utf-8 -*-

"""
Evaluation metrics: L1, FID, KID, TV, PSNR and SSIM.

FID and KID are computed on features of a frozen, fixed-seed random conv
network (`FeatureExtractor`) instead of Inception-V3. The distance math is
the standard one, but absolute values are not comparable with numbers
computed on Inception features.
"""

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from loguru import logger
from scipy import linalg
from scipy.signal import convolve2d

from cma_inpaint import ops
from cma_inpaint.config import METRIC_CSV_HEADER, NUM_WORKERS, PSNR_SENTINEL_DB
from cma_inpaint.exceptions import DataError, DimensionError
from cma_inpaint.imageio import read_image, read_mask
from cma_inpaint.models import MetricReport, PairMetrics
from cma_inpaint.nn import Conv2d, Module
from cma_inpaint.tensor import Tensor, default_dtype, no_grad
from cma_inpaint.utils import atomic_write_bytes, make_rng

SSIM_WINDOW = 7
SSIM_K1 = 0.01
SSIM_K2 = 0.03

FEATURE_DIM = 64
FEATURE_SEED = 1234
_FEATURE_WIDTHS = (16, 32, 64, FEATURE_DIM)

IMAGE_SUFFIXES = (".ppm", ".png")

PathLike = Union[str, Path]


def _same_shape(name: str, x: np.ndarray, y: np.ndarray) -> None:
    if x.shape != y.shape:
        raise DimensionError(f"{name}: shapes {x.shape} and {y.shape} differ")


def l1(x: np.ndarray, y: np.ndarray) -> float:
    """Mean absolute difference."""
    x, y = np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)
    _same_shape("l1", x, y)
    return float(np.mean(np.abs(x - y)))


def masked_l1(x: np.ndarray, y: np.ndarray, mask: np.ndarray) -> float:
    """
    Mean absolute difference over the missing region only (all channels).

    Args:
        x, y: (…, C, H, W) images
        mask: (…, H, W) with 1 = missing

    Returns:
        0.0 for an empty mask
    """
    x, y = np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)
    _same_shape("masked_l1", x, y)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape[-2:] != x.shape[-2:]:
        raise DimensionError(f"masked_l1: mask {mask.shape} does not match images {x.shape}")
    selected = np.broadcast_to(np.expand_dims(mask, -3), x.shape)
    if not selected.any():
        return 0.0
    return float(np.abs(x - y)[selected].mean())


def psnr(x: np.ndarray, y: np.ndarray, peak: float = 1.0) -> float:
    """10·log10(peak² / MSE) in dB; identical inputs return the 99 dB sentinel."""
    x, y = np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)
    _same_shape("psnr", x, y)
    mse = float(np.mean((x - y) ** 2))
    if mse == 0.0:
        return PSNR_SENTINEL_DB
    return float(10.0 * np.log10(peak * peak / mse))


def _grayscale(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return x.mean(axis=0) if x.ndim == 3 else x


def ssim(x: np.ndarray, y: np.ndarray, peak: float = 1.0) -> float:
    """
    Mean SSIM over all valid 7×7 uniform windows of the grayscale images.

    Grayscale is the channel mean of a C×H×W image (H×W is used as is).
    Window statistics use population (biased) variances; C1 = (0.01·peak)²,
    C2 = (0.03·peak)².

    Raises:
        DimensionError: If shapes differ or the image is smaller than the window
    """
    gx, gy = _grayscale(x), _grayscale(y)
    _same_shape("ssim", gx, gy)
    if min(gx.shape) < SSIM_WINDOW:
        raise DimensionError(f"ssim: image {gx.shape} is smaller than the {SSIM_WINDOW}×{SSIM_WINDOW} window")
    c1 = (SSIM_K1 * peak) ** 2
    c2 = (SSIM_K2 * peak) ** 2
    window = np.full((SSIM_WINDOW, SSIM_WINDOW), 1.0 / SSIM_WINDOW ** 2)

    def local_mean(a: np.ndarray) -> np.ndarray:
        return convolve2d(a, window, mode="valid")

    mu_x, mu_y = local_mean(gx), local_mean(gy)
    var_x = local_mean(gx * gx) - mu_x * mu_x
    var_y = local_mean(gy * gy) - mu_y * mu_y
    cov = local_mean(gx * gy) - mu_x * mu_y
    numerator = (2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2)
    denominator = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
    return float(np.mean(numerator / denominator))


def tv(x: np.ndarray) -> float:
    """
    Anisotropic total variation per pixel.

    (Σ|x[i, j] − x[i, j−1]| + Σ|x[i, j] − x[i−1, j]|) / (C·H·W); boundary
    terms without a left or upper neighbour are omitted.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 2:
        x = x[None]
    horizontal = np.abs(np.diff(x, axis=-1)).sum()
    vertical = np.abs(np.diff(x, axis=-2)).sum()
    return float((horizontal + vertical) / x.size)


# ==================================================================================================
# Distribution distances
# ==================================================================================================

def _features(name: str, data: np.ndarray) -> np.ndarray:
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2:
        raise DimensionError(f"{name}: features must be n×d, got {data.shape}")
    if data.shape[0] < 2:
        raise DataError(f"{name}: need at least 2 samples, got {data.shape[0]}")
    return data


def _sqrtm_psd(matrix: np.ndarray) -> np.ndarray:
    eigenvalues, eigenvectors = linalg.eigh(matrix)
    return (eigenvectors * np.sqrt(np.clip(eigenvalues, 0.0, None))) @ eigenvectors.T


def fid(set_a: np.ndarray, set_b: np.ndarray) -> float:
    """
    Fréchet distance between Gaussians fitted to two feature sets.

    ‖μa − μb‖² + tr(Σa + Σb − 2(ΣaΣb)^½), with tr (ΣaΣb)^½ computed from the
    eigenvalues of the symmetric Σa^½·Σb·Σa^½ (clamped at 0).

    Raises:
        DataError: If a set has fewer than 2 samples
        DimensionError: If feature dimensions differ
    """
    a, b = _features("fid", set_a), _features("fid", set_b)
    if a.shape[1] != b.shape[1]:
        raise DimensionError(f"fid: feature dims {a.shape[1]} and {b.shape[1]} differ")
    mu_a, mu_b = a.mean(axis=0), b.mean(axis=0)
    cov_a = np.atleast_2d(np.cov(a, rowvar=False))
    cov_b = np.atleast_2d(np.cov(b, rowvar=False))
    root_a = _sqrtm_psd(cov_a)
    product = root_a @ cov_b @ root_a
    product = 0.5 * (product + product.T)
    trace_sqrt = float(np.sqrt(np.clip(linalg.eigvalsh(product), 0.0, None)).sum())
    return float(np.sum((mu_a - mu_b) ** 2) + np.trace(cov_a) + np.trace(cov_b) - 2.0 * trace_sqrt)


def _polynomial_kernel(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    return (x @ y.T / x.shape[1] + 1.0) ** 3


def _unbiased_mmd2(x: np.ndarray, y: np.ndarray) -> float:
    n, m = x.shape[0], y.shape[0]
    k_xx = _polynomial_kernel(x, x)
    k_yy = _polynomial_kernel(y, y)
    k_xy = _polynomial_kernel(x, y)
    term_xx = (k_xx.sum() - np.trace(k_xx)) / (n * (n - 1))
    term_yy = (k_yy.sum() - np.trace(k_yy)) / (m * (m - 1))
    return float(term_xx + term_yy - 2.0 * k_xy.mean())


def kid(
    set_a: np.ndarray,
    set_b: np.ndarray,
    subsets: int = 0,
    subset_size: int = 1000,
    seed: int = 0,
) -> float:
    """
    Unbiased MMD² with the cubic polynomial kernel k(x, y) = (xᵀy/d + 1)³.

    Args:
        set_a, set_b: n×d and m×d feature sets
        subsets: When > 0, average the estimate over this many random
            subsets of size min(subset_size, n, m) drawn without replacement
        subset_size: Subset size
        seed: Subset sampling seed

    Raises:
        DataError: If a set has fewer than 2 samples
        DimensionError: If feature dimensions differ
    """
    a, b = _features("kid", set_a), _features("kid", set_b)
    if a.shape[1] != b.shape[1]:
        raise DimensionError(f"kid: feature dims {a.shape[1]} and {b.shape[1]} differ")
    if subsets <= 0:
        return _unbiased_mmd2(a, b)
    size = max(2, min(subset_size, a.shape[0], b.shape[0]))
    rng = make_rng(seed)
    estimates = [
        _unbiased_mmd2(
            a[rng.choice(a.shape[0], size, replace=False)],
            b[rng.choice(b.shape[0], size, replace=False)],
        )
        for _ in range(subsets)
    ]
    return float(np.mean(estimates))


class FeatureExtractor(Module):
    """
    Frozen random conv network mapping images to 64-d features.

    Four 4×4/stride-2 conv + ReLU blocks followed by a global average pool.
    Weights come from a fixed seed and are read-only after construction, so
    features depend only on the seed. Inputs must be at least 16×16.
    """

    def __init__(self, channels: int = 3, seed: int = FEATURE_SEED):
        super().__init__()
        rng = make_rng(seed)
        self.seed = seed
        self.blocks: List[Conv2d] = []
        width = channels
        with default_dtype(np.float64):
            for out_width in _FEATURE_WIDTHS:
                self.blocks.append(Conv2d(width, out_width, 4, rng, stride=2, pad=1))
                width = out_width
        for param in self.parameters():
            param.requires_grad = False
            param.data.setflags(write=False)
        self.eval()

    def forward(self, images: np.ndarray) -> np.ndarray:
        images = np.asarray(images, dtype=np.float64)
        if images.ndim == 3:
            images = images[None]
        if images.ndim != 4 or min(images.shape[-2:]) < 16:
            raise DimensionError(f"FeatureExtractor: expected B×C×H×W with H, W ≥ 16, got {images.shape}")
        with no_grad():
            x = Tensor(images, dtype=np.float64)
            for block in self.blocks:
                x = ops.relu(block(x))
            return ops.mean(x, axis=(-2, -1)).data


# ==================================================================================================
# Directory evaluation
# ==================================================================================================

ImagePair = Tuple[str, np.ndarray, np.ndarray, Optional[np.ndarray]]


def _pair_metrics(pair: ImagePair) -> PairMetrics:
    name, restored, truth, mask = pair
    _same_shape(f"pair {name}", restored, truth)
    return PairMetrics(
        name=name,
        l1=l1(restored, truth),
        tv=tv(restored),
        psnr=psnr(restored, truth),
        ssim=ssim(restored, truth),
        masked_l1=None if mask is None else masked_l1(restored, truth, mask),
    )


def evaluate_pairs(
    pairs: Sequence[ImagePair],
    extractor: Optional[FeatureExtractor] = None,
    workers: int = NUM_WORKERS,
    kid_subsets: int = 0,
) -> MetricReport:
    """
    Averages per-pair metrics and computes FID/KID over the two full feature sets.

    Pairs are (name, restored, ground_truth, mask-or-None) with C×H×W images.
    Per-pair work may run on worker threads; rows keep the input order.

    Raises:
        DataError: If fewer than 2 pairs are given
    """
    if len(pairs) < 2:
        raise DataError(f"evaluate: need at least 2 image pairs, got {len(pairs)}")
    if workers > 0:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_pair_metrics, pairs))
    else:
        rows = [_pair_metrics(pair) for pair in pairs]

    extractor = extractor or FeatureExtractor(channels=pairs[0][1].shape[0])
    restored_features = extractor(np.stack([p[1] for p in pairs]))
    truth_features = extractor(np.stack([p[2] for p in pairs]))

    masked = [row.masked_l1 for row in rows if row.masked_l1 is not None]
    report = MetricReport(
        l1=float(np.mean([row.l1 for row in rows])),
        fid=fid(restored_features, truth_features),
        kid=kid(restored_features, truth_features, subsets=kid_subsets),
        tv=float(np.mean([row.tv for row in rows])),
        psnr=float(np.mean([row.psnr for row in rows])),
        ssim=float(np.mean([row.ssim for row in rows])),
        count=len(rows),
        masked_l1=float(np.mean(masked)) if len(masked) == len(rows) else None,
        rows=rows,
    )
    logger.info(
        f"[Metrics] {report.count} pairs: l1={report.l1:.4f} fid={report.fid:.4f} kid={report.kid:.6f} "
        f"tv={report.tv:.4f} psnr={report.psnr:.2f} ssim={report.ssim:.4f}"
    )
    return report


def _image_files(directory: Path) -> List[Path]:
    if not directory.is_dir():
        raise DataError(f"not a directory: {directory}")
    return sorted(p for p in directory.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)


def evaluate_dir(
    restored_dir: PathLike,
    gt_dir: PathLike,
    mask_dir: Optional[PathLike] = None,
    extractor: Optional[FeatureExtractor] = None,
    workers: int = NUM_WORKERS,
) -> MetricReport:
    """
    Evaluates every restored image against the ground truth of the same file name.

    Args:
        restored_dir: Directory of restored images (.ppm/.png)
        gt_dir: Directory holding a ground-truth image per restored file name
        mask_dir: Optional directory of masks named `<stem>.png`; enables masked_l1
        extractor: Feature network for FID/KID (default: the fixed-seed one)
        workers: Threads for per-pair metrics (0 = inline)

    Raises:
        DataError: If a file is missing or unreadable (names the path) or fewer than 2 pairs exist
    """
    restored_dir, gt_dir = Path(restored_dir), Path(gt_dir)
    pairs: List[ImagePair] = []
    for path in _image_files(restored_dir):
        truth_path = gt_dir / path.name
        if not truth_path.exists():
            raise DataError(f"missing ground truth for {path}: {truth_path}")
        mask = None
        if mask_dir is not None:
            mask = read_mask(Path(mask_dir) / f"{path.stem}.png").grid
        pairs.append((path.name, read_image(path), read_image(truth_path), mask))
    logger.info(f"[Metrics] Evaluating {len(pairs)} pairs from {restored_dir} against {gt_dir}")
    return evaluate_pairs(pairs, extractor=extractor, workers=workers)


def format_report_csv(reports: Mapping[str, MetricReport]) -> str:
    """CSV text with METRIC_CSV_HEADER and one row per method (insertion order)."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(METRIC_CSV_HEADER)
    for method, report in reports.items():
        writer.writerow(report.as_row(method))
    return buffer.getvalue()


def write_report_csv(path: PathLike, reports: Mapping[str, MetricReport]) -> Path:
    """Writes the metric table atomically and returns its path."""
    path = Path(path)
    atomic_write_bytes(path, format_report_csv(reports).encode("utf-8"))
    logger.info(f"[Metrics] Wrote {len(reports)} row(s) to {path}")
    return path
