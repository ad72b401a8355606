"""Grad-CAM and Grad-CAM++ concept maps for models without native localization.

Both methods target the pre-sigmoid concept logit S_c and use first-order gradients of
S_c with respect to the deep map A only.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import matplotlib
import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image
from torch import nn

from .config import CamMethod
from .errors import NonFiniteError
from .models import LinearProbe, LocalizationMap, PrototypeCBM, VanillaCBM, prototype_activations, prototype_similarity_maps

logger = logging.getLogger(__name__)

HEATMAP_ALPHA = 0.45


def grad_cam_map(activations: torch.Tensor, gradients: torch.Tensor) -> torch.Tensor:
    """relu(sum_k alpha_k A_k) with alpha_k the spatial mean of dS/dA_k.

    activations and gradients are (..., K, H, W); the result is (..., H, W).
    """
    alpha = gradients.mean(dim=(-2, -1), keepdim=True)
    return torch.relu((alpha * activations).sum(dim=-3))


def grad_cam_pp_map(activations: torch.Tensor, gradients: torch.Tensor) -> torch.Tensor:
    """Grad-CAM++ with the exponential score Y = exp(S).

    With g = dS/dA the higher derivatives of Y are exp(S) g^2 and exp(S) g^3, so
    alpha_uv = g^2 / (2 g^2 + sum_ab A_ab g^3); cells with a zero denominator get 0.
    The channel weight is sum_uv alpha_uv relu(g_uv); the common factor exp(S) only
    rescales the map and is left out.
    """
    g2 = gradients.pow(2)
    g3 = gradients.pow(3)
    sum_a = activations.sum(dim=(-2, -1), keepdim=True)
    denom = 2 * g2 + sum_a * g3
    nonzero = denom != 0
    alpha = torch.where(nonzero, g2 / torch.where(nonzero, denom, torch.ones_like(denom)), torch.zeros_like(denom))
    weights = (alpha * torch.relu(gradients)).sum(dim=(-2, -1), keepdim=True)
    return torch.relu((weights * activations).sum(dim=-3))


CAM_FUNCTIONS: dict[CamMethod, Callable[[torch.Tensor, torch.Tensor], torch.Tensor]] = {
    CamMethod.GRAD_CAM: grad_cam_map,
    CamMethod.GRAD_CAM_PP: grad_cam_pp_map,
}


def score_head(model: nn.Module) -> tuple[Callable[[torch.Tensor], torch.Tensor], int]:
    """Function from the deep map to pre-sigmoid scores, and the number of scores.

    For the linear probe the scores are the class logits.
    """
    if isinstance(model, VanillaCBM):
        return model.head.concept_logits, model.head.concept_layer.out_features
    if isinstance(model, PrototypeCBM):
        bank = model.bank

        def proto_scores(deep: torch.Tensor) -> torch.Tensor:
            return bank.concept_layer(prototype_activations(prototype_similarity_maps(deep, bank)))

        return proto_scores, bank.concept_layer.out_features
    if isinstance(model, LinearProbe):
        return (lambda deep: model.classifier(deep.mean(dim=(-2, -1)))), model.classifier.out_features
    raise TypeError(f"no attribution head for {type(model).__name__}")


def concept_cams(
    model: nn.Module,
    images: torch.Tensor,
    concept_id: int,
    method: CamMethod | str = CamMethod.GRAD_CAM_PP,
) -> torch.Tensor:
    """CAMs of one concept for a batch of images: (B, 3, H, W) -> (B, H_z, W_z)."""
    head, num_scores = score_head(model)
    if not 0 <= concept_id < num_scores:
        raise ValueError(f"concept id {concept_id} out of range [0, {num_scores})")
    with torch.no_grad():
        deep = model.backbone(images).deep
    with torch.enable_grad():
        activations = deep.detach().requires_grad_(True)
        scores = head(activations)[:, concept_id]
        (gradients,) = torch.autograd.grad(scores.sum(), activations)
    if not torch.isfinite(gradients).all():
        raise NonFiniteError("attribution", f"non-finite gradients for concept {concept_id}")
    return CAM_FUNCTIONS[CamMethod(method)](activations.detach(), gradients)


@dataclass
class AttributionRequest:
    """One (model, image, concept) CAM query; image is (3, H, W)."""

    model: nn.Module
    image: torch.Tensor
    concept_id: int
    method: CamMethod = CamMethod.GRAD_CAM_PP
    sample_id: str | None = None

    def __post_init__(self) -> None:
        self.method = CamMethod(self.method)
        _, num_scores = score_head(self.model)
        if not 0 <= self.concept_id < num_scores:
            raise ValueError(f"concept id {self.concept_id} out of range [0, {num_scores})")


def attribute(request: AttributionRequest) -> LocalizationMap:
    values = concept_cams(request.model, request.image.unsqueeze(0), request.concept_id, request.method)[0]
    return LocalizationMap(values, subject=request.concept_id, sample_id=request.sample_id)


def grad_cam(request: AttributionRequest) -> LocalizationMap:
    return attribute(AttributionRequest(request.model, request.image, request.concept_id, CamMethod.GRAD_CAM, request.sample_id))


def grad_cam_pp(request: AttributionRequest) -> LocalizationMap:
    return attribute(AttributionRequest(request.model, request.image, request.concept_id, CamMethod.GRAD_CAM_PP, request.sample_id))


def render_heatmap(values: torch.Tensor, pixels: np.ndarray, alpha: float = HEATMAP_ALPHA, cmap: str = "jet") -> np.ndarray:
    """Upsample a map to the image, colour it and blend it over pixels (H, W, 3 uint8)."""
    h, w = pixels.shape[:2]
    up = F.interpolate(values.detach().double()[None, None], size=(h, w), mode="bilinear", align_corners=True)[0, 0]
    up = up.clamp_min(0)
    peak = float(up.max())
    norm = (up / peak).numpy() if peak > 0 else np.zeros((h, w))
    colors = matplotlib.colormaps[cmap](norm)[..., :3] * 255.0
    blended = (1 - alpha) * pixels.astype(np.float64) + alpha * colors
    return blended.clip(0, 255).astype(np.uint8)


def save_heatmap(
    values: torch.Tensor, pixels: np.ndarray, path: Path, alpha: float = HEATMAP_ALPHA, cmap: str = "jet"
) -> Path:
    """Write the overlay of render_heatmap as a PNG."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(render_heatmap(values, pixels, alpha, cmap)).save(path)
    logger.debug("Saved heatmap %s", path)
    return path
