"""Concept bottleneck heads: vanilla (pooled) and part-prototype, plus a linear-probe baseline.

Feature maps are channels first: deep maps are (B, D, H_z, W_z) and prototype
similarity maps are (B, M, H_z, W_z).
"""

import logging
import math
from dataclasses import dataclass, field

import torch
import torch.nn.functional as F
from torch import nn

from .backbone import FeatureExtractor, FeatureMaps, init_params
from .config import ModelKind, Similarity, TrainConfig
from .errors import ShapeError

logger = logging.getLogger(__name__)

LOG_DISTANCE_EPS = 1e-4


@dataclass
class LocalizationMap:
    """Importance map of one prototype or concept on one image."""

    values: torch.Tensor
    subject: int
    subject_kind: str = "concept"
    sample_id: str | None = None


@dataclass
class CBMOutput:
    """Everything a forward pass produces; concept fields are None for the linear probe."""

    class_logits: torch.Tensor
    features: FeatureMaps
    concept_logits: torch.Tensor | None = None
    concept_probs: torch.Tensor | None = None
    maps: torch.Tensor | None = None
    activations: torch.Tensor | None = None


def _seeded_linear(in_features: int, out_features: int, gen: torch.Generator) -> nn.Linear:
    layer = nn.Linear(in_features, out_features)
    bound = 1.0 / math.sqrt(in_features)
    with torch.no_grad():
        layer.weight.uniform_(-bound, bound, generator=gen)
        layer.bias.uniform_(-bound, bound, generator=gen)
    return layer


class ConceptHead(nn.Module):
    """Vanilla CBM head: concept predictor g (D -> C) and category predictor h (C -> K)."""

    def __init__(self, feature_dim: int, num_concepts: int, num_categories: int, seed: int = 0) -> None:
        super().__init__()
        gen = torch.Generator().manual_seed(seed)
        self.concept_layer = _seeded_linear(feature_dim, num_concepts, gen)
        self.category_layer = _seeded_linear(num_concepts, num_categories, gen)

    def concept_logits(self, deep: torch.Tensor) -> torch.Tensor:
        """Pre-sigmoid concept scores from the average-pooled deep map."""
        pooled = deep.mean(dim=(-2, -1))
        return self.concept_layer(pooled)


class PrototypeBank(nn.Module):
    """M prototypes of dimension D, concept weights (C x M) and category weights (K x C)."""

    def __init__(
        self,
        num_prototypes: int,
        feature_dim: int,
        num_concepts: int,
        num_categories: int,
        similarity: Similarity = Similarity.COSINE,
        seed: int = 0,
    ) -> None:
        super().__init__()
        gen = torch.Generator().manual_seed(seed)
        protos = torch.randn(num_prototypes, feature_dim, generator=gen)
        self.prototypes = nn.Parameter(protos / protos.norm(dim=1, keepdim=True))
        self.concept_layer = _seeded_linear(num_prototypes, num_concepts, gen)
        self.category_layer = _seeded_linear(num_concepts, num_categories, gen)
        self.similarity = Similarity(similarity)

    @property
    def concept_weights(self) -> torch.Tensor:
        """omega^g, shape (C, M)."""
        return self.concept_layer.weight


def similarity_maps(deep: torch.Tensor, prototypes: torch.Tensor, kind: Similarity = Similarity.COSINE) -> torch.Tensor:
    """Sim(z[u, v], p_j) for every cell and prototype: (B, D, H, W) x (M, D) -> (B, M, H, W).

    Cosine similarity is 0 where either vector has zero norm.
    """
    if deep.shape[-3] != prototypes.shape[-1]:
        raise ShapeError(f"feature dim {deep.shape[-3]} does not match prototype dim {prototypes.shape[-1]}")
    dot = torch.einsum("...dhw,md->...mhw", deep, prototypes)
    z_norm = deep.norm(dim=-3).unsqueeze(-3)
    p_norm = prototypes.norm(dim=-1)[:, None, None]

    if Similarity(kind) is Similarity.COSINE:
        denom = z_norm * p_norm
        nonzero = denom > 0
        return torch.where(nonzero, dot / torch.where(nonzero, denom, torch.ones_like(denom)), torch.zeros_like(dot))

    d2 = (z_norm**2 - 2 * dot + p_norm**2).clamp_min(0)
    return torch.log((d2 + 1) / (d2 + LOG_DISTANCE_EPS))


def prototype_similarity_maps(deep: torch.Tensor, bank: PrototypeBank) -> torch.Tensor:
    """Localization maps l_{p_j}(x) of every prototype."""
    return similarity_maps(deep, bank.prototypes, bank.similarity)


def prototype_activations(maps: torch.Tensor) -> torch.Tensor:
    """a_j = max over all cells of map_j; reduces the last two dims."""
    if maps.numel() == 0:
        raise ShapeError("prototype activations need non-empty maps")
    return maps.flatten(-2).amax(dim=-1)


def vanilla_forward(backbone: FeatureExtractor, head: ConceptHead, images: torch.Tensor) -> CBMOutput:
    """Average pool -> sigmoid concept predictor -> linear category predictor."""
    features = backbone(images)
    concept_logits = head.concept_logits(features.deep)
    concept_probs = torch.sigmoid(concept_logits)
    return CBMOutput(
        class_logits=head.category_layer(concept_probs),
        features=features,
        concept_logits=concept_logits,
        concept_probs=concept_probs,
    )


def proto_forward(backbone: FeatureExtractor, bank: PrototypeBank, images: torch.Tensor) -> CBMOutput:
    """Similarity maps -> max activations -> sigmoid concept predictor -> category predictor."""
    features = backbone(images)
    maps = prototype_similarity_maps(features.deep, bank)
    activations = prototype_activations(maps)
    concept_logits = bank.concept_layer(activations)
    concept_probs = torch.sigmoid(concept_logits)
    return CBMOutput(
        class_logits=bank.category_layer(concept_probs),
        features=features,
        concept_logits=concept_logits,
        concept_probs=concept_probs,
        maps=maps,
        activations=activations,
    )


def top_n_indices(weights: torch.Tensor, n: int) -> torch.Tensor:
    """Indices of the n largest entries along the last dim, descending, ties by ascending index."""
    m = weights.shape[-1]
    if not 1 <= n <= m:
        raise ValueError(f"N must be in [1, {m}], got {n}")
    order = torch.argsort(-weights.detach(), dim=-1, stable=True)
    return order[..., :n]


def top_n_prototypes(concept_row: torch.Tensor, n: int, warn: bool = True) -> list[int]:
    """Top_N(omega_c^g): the n prototypes with the largest weights for one concept.

    Selection ignores the sign of the weights; a warning is logged when a selected
    weight is not positive.
    """
    idx = top_n_indices(concept_row, n).tolist()
    if warn and bool((concept_row.detach()[idx] <= 0).any()):
        logger.warning("Top-%d prototypes include non-positive concept weights", n)
    return idx


def concept_localization_map(maps: torch.Tensor, concept_row: torch.Tensor, n: int) -> torch.Tensor:
    """l_c(x): mean of the Top_N prototypes' maps. maps is (..., M, H, W)."""
    idx = torch.as_tensor(top_n_prototypes(concept_row, n, warn=False), device=maps.device)
    return maps.index_select(-3, idx).mean(dim=-3)


def concept_localization_maps(maps: torch.Tensor, concept_weights: torch.Tensor, n: int) -> torch.Tensor:
    """l_c(x) for every concept at once: (B, M, H, W) x (C, M) -> (B, C, H, W)."""
    idx = top_n_indices(concept_weights, n)
    selected = maps[:, idx]
    return selected.mean(dim=2)


class StagedModel(nn.Module):
    """Backbone plus head, trained in a warm-up stage and a joint stage."""

    backbone: FeatureExtractor

    def warmup(self) -> None:
        """Freeze the backbone; only head parameters train."""
        self.backbone.requires_grad_(False)

    def joint(self) -> None:
        """Unfreeze everything."""
        self.requires_grad_(True)


class VanillaCBM(StagedModel):
    """f -> average pool -> g -> h."""

    def __init__(self, backbone: FeatureExtractor, head: ConceptHead) -> None:
        super().__init__()
        self.backbone = backbone
        self.head = head

    def forward(self, images: torch.Tensor) -> CBMOutput:
        return vanilla_forward(self.backbone, self.head, images)


class PrototypeCBM(StagedModel):
    """f -> prototype similarity maps -> max activations -> g -> h."""

    def __init__(self, backbone: FeatureExtractor, bank: PrototypeBank, top_n: int) -> None:
        super().__init__()
        self.backbone = backbone
        self.bank = bank
        self.top_n = top_n

    def forward(self, images: torch.Tensor) -> CBMOutput:
        return proto_forward(self.backbone, self.bank, images)

    def concept_maps(self, out: CBMOutput) -> torch.Tensor:
        """Concept maps (B, C, H_z, W_z) of a forward output: mean of each concept's Top-N prototype maps."""
        return concept_localization_maps(out.maps, self.bank.concept_weights, self.top_n)


class LinearProbe(StagedModel):
    """Non-interpretable baseline: f -> average pool -> linear classifier."""

    def __init__(self, backbone: FeatureExtractor, num_categories: int, seed: int = 0) -> None:
        super().__init__()
        self.backbone = backbone
        self.classifier = _seeded_linear(backbone.config.feature_dim, num_categories, torch.Generator().manual_seed(seed))

    def forward(self, images: torch.Tensor) -> CBMOutput:
        features = self.backbone(images)
        return CBMOutput(class_logits=self.classifier(features.deep.mean(dim=(-2, -1))), features=features)


def build_model(config: TrainConfig, num_concepts: int, num_categories: int) -> StagedModel:
    """Instantiate the model named by config with seeded parameters."""
    backbone = init_params(config.extractor_config())
    if config.model is ModelKind.VANILLA:
        return VanillaCBM(backbone, ConceptHead(config.feature_dim, num_concepts, num_categories, seed=config.seed))
    if config.model is ModelKind.PROTO:
        bank = PrototypeBank(
            config.num_prototypes, config.feature_dim, num_concepts, num_categories,
            similarity=config.similarity, seed=config.seed,
        )
        return PrototypeCBM(backbone, bank, top_n=config.top_n)
    return LinearProbe(backbone, num_categories, seed=config.seed)


@dataclass
class ConceptEvidence:
    """One concept's contribution to a predicted category."""

    concept_id: int
    probability: float
    contribution: float
    localization: LocalizationMap


@dataclass
class Explanation:
    """Interpretable classification of one image."""

    category: int
    class_probability: float
    concepts: list[ConceptEvidence] = field(default_factory=list)


@torch.no_grad()
def explain_prediction(model: PrototypeCBM, image: torch.Tensor, top_k: int = 3, sample_id: str | None = None) -> Explanation:
    """Predicted category with the top_k concepts ranked by category weight x probability."""
    out = model(image.unsqueeze(0))
    probs = F.softmax(out.class_logits[0], dim=-1)
    category = int(probs.argmax())
    contributions = model.bank.category_layer.weight[category] * out.concept_probs[0]
    ranked = torch.argsort(-contributions, stable=True)[:top_k].tolist()
    maps = model.concept_maps(out)[0]
    return Explanation(
        category=category,
        class_probability=float(probs[category]),
        concepts=[
            ConceptEvidence(
                concept_id=c,
                probability=float(out.concept_probs[0, c]),
                contribution=float(contributions[c]),
                localization=LocalizationMap(maps[c], subject=c, sample_id=sample_id),
            )
            for c in ranked
        ],
    )
