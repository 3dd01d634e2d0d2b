"""Image transformations: baseline jitter, Gaussian noise, quarter rotations
and independently sampled crop/colour views for contrastive-style games.

Images are float32 arrays of shape (H, W, 3) with values in [0, 1]; every
transform clamps back into that range. All randomness comes from an explicit
``numpy.random.Generator``.
"""

from __future__ import annotations

from dataclasses import dataclass

import cv2
import numpy as np

GRAY_WEIGHTS = np.array([0.299, 0.587, 0.114], dtype=np.float32)


@dataclass(frozen=True)
class AugmentPlan:
    """Knobs for every transform used across the game variants.

    The four jitter values are strengths (factor ranges), not application
    probabilities; each jitter op is always applied with a factor drawn from
    its range. ``noise_variance`` is the variance of the additive Gaussian
    noise. The crop/colour-view parameters follow the standard CIFAR-10
    contrastive recipe.
    """

    brightness: float = 0.1
    contrast: float = 0.1
    saturation: float = 0.1
    hue: float = 0.1
    grayscale_p: float = 0.1
    hflip_p: float = 0.5
    noise_enabled: bool = False
    noise_variance: float = 0.1
    rotation_enabled: bool = False
    simclr_enabled: bool = False
    crop_scale: tuple[float, float] = (0.08, 1.0)
    crop_ratio: tuple[float, float] = (0.75, 4.0 / 3.0)
    view_color_strength: float = 0.5
    view_color_p: float = 0.8
    view_grayscale_p: float = 0.2

    def __post_init__(self):
        for name in ("grayscale_p", "hflip_p", "view_color_p", "view_grayscale_p"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        if self.noise_variance < 0:
            raise ValueError(f"noise_variance must be >= 0, got {self.noise_variance}")
        for name in ("brightness", "contrast", "saturation", "hue",
                     "view_color_strength"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


def _check_image(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img, dtype=np.float32)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3) image, got shape {img.shape}")
    return img


def _clip(img: np.ndarray) -> np.ndarray:
    return np.clip(img, 0.0, 1.0)


def to_grayscale(img: np.ndarray) -> np.ndarray:
    """Luma grayscale replicated over the three channels."""
    img = _check_image(img)
    gray = img @ GRAY_WEIGHTS
    return np.repeat(gray[:, :, None], 3, axis=2)


def hflip(img: np.ndarray) -> np.ndarray:
    return _check_image(img)[:, ::-1].copy()


def adjust_brightness(img: np.ndarray, factor: float) -> np.ndarray:
    return _clip(_check_image(img) * factor)


def adjust_contrast(img: np.ndarray, factor: float) -> np.ndarray:
    img = _check_image(img)
    mean = float((img @ GRAY_WEIGHTS).mean())
    return _clip(img * factor + mean * (1.0 - factor))


def adjust_saturation(img: np.ndarray, factor: float) -> np.ndarray:
    img = _check_image(img)
    return _clip(img * factor + to_grayscale(img) * (1.0 - factor))


def adjust_hue(img: np.ndarray, shift: float) -> np.ndarray:
    """Shift hue by ``shift`` full cycles (shift in [-0.5, 0.5])."""
    img = _check_image(img)
    hsv = cv2.cvtColor(img, cv2.COLOR_RGB2HSV)
    hsv[..., 0] = (hsv[..., 0] + shift * 360.0) % 360.0
    return _clip(cv2.cvtColor(hsv, cv2.COLOR_HSV2RGB))


def color_jitter(img: np.ndarray, rng: np.random.Generator, brightness: float,
                 contrast: float, saturation: float, hue: float) -> np.ndarray:
    """Brightness, contrast, saturation then hue, each with a random factor.

    Factor ranges are [1 - s, 1 + s] for the first three and [-s, s] cycles
    for hue. Zero strengths reduce to the identity.
    """
    img = _check_image(img)
    if brightness > 0:
        img = adjust_brightness(img, rng.uniform(1.0 - brightness, 1.0 + brightness))
    if contrast > 0:
        img = adjust_contrast(img, rng.uniform(1.0 - contrast, 1.0 + contrast))
    if saturation > 0:
        img = adjust_saturation(img, rng.uniform(1.0 - saturation, 1.0 + saturation))
    if hue > 0:
        img = adjust_hue(img, rng.uniform(-hue, hue))
    return img


def baseline_augment(img: np.ndarray, plan: AugmentPlan,
                     rng: np.random.Generator) -> np.ndarray:
    """Training-time jitter: colour jitter, random grayscale, random hflip."""
    img = color_jitter(img, rng, plan.brightness, plan.contrast,
                       plan.saturation, plan.hue)
    if plan.grayscale_p > 0 and rng.random() < plan.grayscale_p:
        img = to_grayscale(img)
    if plan.hflip_p > 0 and rng.random() < plan.hflip_p:
        img = hflip(img)
    return _clip(img)


def add_gaussian_noise(img: np.ndarray, rng: np.random.Generator,
                       variance: float = 0.1) -> np.ndarray:
    """Add zero-mean Gaussian noise of the given variance, then clamp."""
    img = _check_image(img)
    if variance == 0:
        return img.copy()
    noise = rng.normal(0.0, variance ** 0.5, size=img.shape).astype(np.float32)
    return _clip(img + noise)


def rotate_quarter(img: np.ndarray, k: int) -> np.ndarray:
    """Counter-clockwise rotation by k quarter turns; exact pixel permutation."""
    img = _check_image(img)
    if img.shape[0] != img.shape[1]:
        raise ValueError(f"rotation requires a square image, got {img.shape[:2]}")
    if k not in (0, 1, 2, 3):
        raise ValueError(f"rotation label must be in {{0,1,2,3}}, got {k}")
    return np.rot90(img, k=k, axes=(0, 1)).copy()


def sample_rotation(rng: np.random.Generator) -> int:
    """Uniform rotation label in {0, 1, 2, 3}."""
    return int(rng.integers(0, 4))


def random_resized_crop(img: np.ndarray, rng: np.random.Generator,
                        scale: tuple[float, float],
                        ratio: tuple[float, float]) -> np.ndarray:
    """Random area/aspect crop resized back to the input size (bilinear)."""
    img = _check_image(img)
    height, width = img.shape[:2]
    area = height * width
    log_ratio = (np.log(ratio[0]), np.log(ratio[1]))
    for _ in range(10):
        target_area = area * rng.uniform(scale[0], scale[1])
        aspect = float(np.exp(rng.uniform(*log_ratio)))
        w = int(round((target_area * aspect) ** 0.5))
        h = int(round((target_area / aspect) ** 0.5))
        if 0 < w <= width and 0 < h <= height:
            top = int(rng.integers(0, height - h + 1))
            left = int(rng.integers(0, width - w + 1))
            crop = img[top:top + h, left:left + w]
            if (h, w) == (height, width):
                return crop.copy()
            return cv2.resize(crop, (width, height), interpolation=cv2.INTER_LINEAR)
    return img.copy()


def simclr_view(img: np.ndarray, plan: AugmentPlan,
                rng: np.random.Generator) -> np.ndarray:
    """One independently augmented view: crop+resize, flip, colour distortion.

    Colour distortion uses strength s: jitter factors (0.8s, 0.8s, 0.8s, 0.2s)
    applied with probability ``view_color_p``, then random grayscale. No blur
    at 32x32.
    """
    img = random_resized_crop(img, rng, plan.crop_scale, plan.crop_ratio)
    if rng.random() < plan.hflip_p:
        img = hflip(img)
    s = plan.view_color_strength
    if s > 0 and rng.random() < plan.view_color_p:
        img = color_jitter(img, rng, 0.8 * s, 0.8 * s, 0.8 * s, 0.2 * s)
    if rng.random() < plan.view_grayscale_p:
        img = to_grayscale(img)
    return _clip(img)
