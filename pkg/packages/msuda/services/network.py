"""
Shared-Private Network
Shared extractor E_s, per-source private extractors E_p_j, optional target
extractor E_t, sentiment classifier C over [z_s ‖ z_p] and the (K+1)-way
domain discriminator D. Domain index K is the target.
"""

import logging
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.sparse as sp

from models.config_models import ModelConfig
from services.numeric_core import DTYPE, AffineLayer, Matrix, Parameter, relu, relu_backward, softmax
from utils.errors import ConfigurationError, DimensionError

logger = logging.getLogger(__name__)

TARGET = "target"

ExtractorKey = Union[int, str]


class MLP:
    """Affine layers with ReLU between them (and after the last one when `final_activation`)"""

    def __init__(
            self,
            sizes: Sequence[int],
            name: str,
            rng: Optional[np.random.Generator],
            final_activation: bool
    ):
        if len(sizes) < 2:
            raise DimensionError(f"{name}: an MLP needs at least input and output sizes, got {list(sizes)}")
        self.name = name
        self.final_activation = final_activation
        self.layers = [
            AffineLayer(sizes[i], sizes[i + 1], f"{name}.{i}", rng)
            for i in range(len(sizes) - 1)
        ]

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim

    def parameters(self) -> List[Parameter]:
        return [param for layer in self.layers for param in layer.parameters()]

    def _activated(self, i: int) -> bool:
        return i < len(self.layers) - 1 or self.final_activation

    def forward(self, x: Matrix) -> Tuple[Matrix, list]:
        caches = []
        out = x
        for i, layer in enumerate(self.layers):
            out, affine_cache = layer.forward(out)
            pre_activation = None
            if self._activated(i):
                pre_activation = out
                out = relu(out)
            caches.append((affine_cache, pre_activation))
        return out, caches

    def backward(self, d_out: Matrix, caches: list) -> Matrix:
        grad = d_out
        for layer, (affine_cache, pre_activation) in zip(reversed(self.layers), reversed(caches)):
            if pre_activation is not None:
                grad = relu_backward(grad, pre_activation)
            grad = layer.backward(grad, affine_cache)
        return grad

    def __call__(self, x: Matrix) -> Matrix:
        return self.forward(x)[0]


class SharedPrivateModel:
    """Parameters and forward paths of the shared-private architecture"""

    def __init__(self, config: ModelConfig, rng: Optional[np.random.Generator] = None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.config = config

        extractor_sizes = [config.input_dim, config.hidden_dim, config.feature_dim]
        head_hidden = [config.head_hidden_dim] if config.head_hidden_dim > 0 else []

        self.e_shared = MLP(extractor_sizes, "e_shared", rng, final_activation=True)
        self.e_private = [
            MLP(extractor_sizes, f"e_private.{j}", rng, final_activation=True)
            for j in range(config.num_sources)
        ]
        self.classifier = MLP(
            [2 * config.feature_dim] + head_hidden + [config.num_classes], "classifier", rng, final_activation=False
        )
        self.discriminator = MLP(
            [config.feature_dim] + head_hidden + [config.num_domains], "discriminator", rng, final_activation=False
        )
        self.e_target: Optional[MLP] = None
        if config.target_extractor:
            self.e_target = MLP(extractor_sizes, "e_target", rng, final_activation=True)

    # ------------------------------------------------------------------
    # structure
    # ------------------------------------------------------------------

    @property
    def num_sources(self) -> int:
        return self.config.num_sources

    def add_target_extractor(self, rng: np.random.Generator) -> MLP:
        """Attach a freshly initialized E_t (2ST-UDA)"""
        sizes = [self.config.input_dim, self.config.hidden_dim, self.config.feature_dim]
        self.e_target = MLP(sizes, "e_target", rng, final_activation=True)
        self.config = self.config.model_copy(update={"target_extractor": True})
        return self.e_target

    def extractor(self, key: ExtractorKey) -> MLP:
        if key == TARGET:
            if self.e_target is None:
                raise ConfigurationError("Target extractor requested but this model has no E_t")
            return self.e_target
        if isinstance(key, (int, np.integer)) and 0 <= key < self.num_sources:
            return self.e_private[int(key)]
        raise ConfigurationError(f"Unknown private extractor {key!r}; expected 0..{self.num_sources - 1} or '{TARGET}'")

    def main_parameters(self) -> List[Parameter]:
        """E_s, every E_p_j and C: the blocks the main phase of WS-UDA updates"""
        params = list(self.e_shared.parameters())
        for extractor in self.e_private:
            params.extend(extractor.parameters())
        params.extend(self.classifier.parameters())
        return params

    def discriminator_parameters(self) -> List[Parameter]:
        return self.discriminator.parameters()

    def target_parameters(self) -> List[Parameter]:
        return self.extractor(TARGET).parameters()

    def parameters(self) -> List[Parameter]:
        params = self.main_parameters() + self.discriminator_parameters()
        if self.e_target is not None:
            params.extend(self.e_target.parameters())
        return params

    def parameter_blocks(self) -> Dict[str, Parameter]:
        return {param.name: param for param in self.parameters()}

    def zero_grad(self):
        for param in self.parameters():
            param.zero_grad()

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: param.value.copy() for name, param in self.parameter_blocks().items()}

    def load_state_dict(self, state: Dict[str, np.ndarray]):
        blocks = self.parameter_blocks()
        missing = set(blocks) - set(state)
        if missing:
            raise ConfigurationError(f"State is missing parameter blocks: {sorted(missing)}")
        for name, param in blocks.items():
            value = np.asarray(state[name], dtype=DTYPE)
            if value.shape != param.shape:
                raise DimensionError(f"Block {name}: stored shape {value.shape} != model shape {param.shape}")
            param.value[...] = value

    # ------------------------------------------------------------------
    # forward paths
    # ------------------------------------------------------------------

    def prepare_input(self, x) -> Matrix:
        """Densify and check a feature batch"""
        if sp.issparse(x):
            x = x.toarray()
        x = np.asarray(x, dtype=DTYPE)
        if x.ndim != 2 or x.shape[1] != self.config.input_dim:
            raise DimensionError(f"Expected a batch of width {self.config.input_dim}, got shape {x.shape}")
        return x

    def extract_shared(self, x) -> Matrix:
        return self.e_shared(self.prepare_input(x))

    def extract_private(self, key: ExtractorKey, x) -> Matrix:
        return self.extractor(key)(self.prepare_input(x))

    def _check_features(self, z: Matrix, what: str):
        if z.ndim != 2 or z.shape[1] != self.config.feature_dim:
            raise DimensionError(f"{what} must have width {self.config.feature_dim}, got shape {z.shape}")

    def classify(self, z_s: Matrix, z_p: Matrix) -> Matrix:
        """Class probabilities of C over [z_s ‖ z_p], shared block first"""
        self._check_features(z_s, "shared features")
        self._check_features(z_p, "private features")
        if z_s.shape[0] != z_p.shape[0]:
            raise DimensionError(f"Feature batches differ in size: {z_s.shape[0]} vs {z_p.shape[0]}")
        return softmax(self.classifier(np.hstack([z_s, z_p])))

    def discriminate(self, z: Matrix) -> Matrix:
        self._check_features(z, "features")
        return softmax(self.discriminator(z))

    def source_predictions(self, x) -> np.ndarray:
        """ĉ_j for every source path, stacked as K × batch × num_classes"""
        x = self.prepare_input(x)
        z_s = self.e_shared(x)
        return np.stack([self.classify(z_s, extractor(x)) for extractor in self.e_private])

    def target_path_predictions(self, x) -> Matrix:
        """C(E_s(x), E_t(x))"""
        x = self.prepare_input(x)
        return self.classify(self.e_shared(x), self.extractor(TARGET)(x))
