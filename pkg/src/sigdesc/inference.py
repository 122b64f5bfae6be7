"""Model profiles and the optional TorchScript activation provider.

A profile is a small JSON file binding a network geometry (block shapes, FC
widths, preprocessing constants) to the tensor names a scripted model returns.
Only this module touches torch, and it imports it lazily: everything
downstream of activation dumps runs without any inference runtime installed.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .config import BlockShape, ConfigError, NetworkConfig, Preprocessing
from .images import prepare_input
from .tensors import NetworkActivations, BlockActivations, require_valid_shapes


@dataclass(frozen=True)
class ModelProfile:
    """Network geometry plus the output-tensor names of a scripted model."""

    name: str
    config: NetworkConfig
    block_tensors: tuple[str, ...]
    fc1_tensor: str
    fc2_tensor: str
    class_probs_tensor: str | None
    class_count: int | None

    def __post_init__(self) -> None:
        if len(self.block_tensors) != self.config.n_blocks:
            raise ConfigError(
                f"{len(self.block_tensors)} block tensor names for "
                f"{self.config.n_blocks} blocks"
            )
        if (self.class_probs_tensor is None) != (self.class_count is None):
            raise ConfigError("class tensor name and class count must come together")


def _require(mapping: dict, key: str, where: str):
    if key not in mapping:
        raise ConfigError(f"profile {where}: missing key {key!r}")
    return mapping[key]


def parse_profile(text: str, where: str = "<string>") -> ModelProfile:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"profile {where}: invalid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"profile {where}: top level must be an object")
    name = _require(doc, "name", where)
    inp = _require(doc, "input", where)
    means = _require(inp, "channel_means", where)
    if not (isinstance(means, list) and len(means) == 3):
        raise ConfigError(f"profile {where}: channel_means must be a list of 3 numbers")
    preprocessing = Preprocessing(
        height=_require(inp, "height", where),
        width=_require(inp, "width", where),
        channel_means=tuple(float(v) for v in means),
        channel_order=inp.get("channel_order", "RGB"),
    )
    raw_blocks = _require(doc, "blocks", where)
    if not raw_blocks:
        raise ConfigError(f"profile {where}: blocks list is empty")
    shapes = []
    tensors = []
    for n, blk in enumerate(raw_blocks, start=1):
        shapes.append(
            BlockShape(
                height=_require(blk, "height", f"{where} block {n}"),
                width=_require(blk, "width", f"{where} block {n}"),
                channels=_require(blk, "channels", f"{where} block {n}"),
            )
        )
        tensors.append(str(_require(blk, "tensor", f"{where} block {n}")))
    fc1 = _require(doc, "fc1", where)
    fc2 = _require(doc, "fc2", where)
    config = NetworkConfig(
        blocks=tuple(shapes),
        fc1_size=_require(fc1, "size", where),
        fc2_size=_require(fc2, "size", where),
        preprocessing=preprocessing,
    )
    probs = doc.get("class_probs")
    return ModelProfile(
        name=str(name),
        config=config,
        block_tensors=tuple(tensors),
        fc1_tensor=str(_require(fc1, "tensor", where)),
        fc2_tensor=str(_require(fc2, "tensor", where)),
        class_probs_tensor=None if probs is None else str(_require(probs, "tensor", where)),
        class_count=None if probs is None else int(_require(probs, "count", where)),
    )


def load_profile(path) -> ModelProfile:
    """Parse a profile JSON file; short names resolve to bundled profiles."""
    p = Path(path)
    if not p.suffix and not p.exists():
        res = resources.files("sigdesc").joinpath(f"profiles/{p.name}.json")
        if res.is_file():
            return parse_profile(res.read_text(encoding="utf-8"), where=str(path))
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read profile {path}: {exc}") from None
    return parse_profile(text, where=str(path))


class TorchScriptRunner:
    """Runs a scripted model whose forward returns a name->tensor mapping.

    Calls are serialized by a lock: safe from multiple workers, and tensors
    from different images can never interleave.
    """

    def __init__(self, model_path, profile: ModelProfile):
        try:
            import torch
        except ImportError as exc:
            raise ConfigError(
                "running a model requires torch; install the 'inference' extra "
                "or supply activation dumps instead"
            ) from exc
        self._torch = torch
        self.profile = profile
        try:
            self._module = torch.jit.load(str(model_path), map_location="cpu")
        except (OSError, RuntimeError, ValueError) as exc:
            raise ConfigError(f"cannot load model {model_path}: {exc}") from None
        self._module.eval()
        self._lock = threading.Lock()

    def _pull(self, outputs, tensor_name: str) -> np.ndarray:
        if tensor_name not in outputs:
            have = ", ".join(sorted(outputs))
            raise ConfigError(
                f"model does not expose tensor {tensor_name!r} (outputs: {have})"
            )
        return outputs[tensor_name].detach().cpu().numpy().astype(np.float32, copy=False)

    def activations_for(self, pixels: np.ndarray) -> NetworkActivations:
        """Run preprocessed (H, W, 3) float32 input through the model."""
        torch = self._torch
        pixels = np.asarray(pixels, dtype=np.float32)
        if pixels.ndim != 3 or pixels.shape[2] != 3:
            raise ValueError(f"expected (H, W, 3) input, got shape {pixels.shape}")
        # HWC -> NCHW
        batch = torch.from_numpy(np.ascontiguousarray(pixels.transpose(2, 0, 1))[np.newaxis])
        with self._lock, torch.no_grad():
            outputs = self._module(batch)
            blocks = []
            for m, tensor_name in enumerate(self.profile.block_tensors, start=1):
                arr = self._pull(outputs, tensor_name)
                if arr.ndim == 4 and arr.shape[0] == 1:
                    arr = arr[0]
                if arr.ndim != 3:
                    raise ConfigError(
                        f"tensor {tensor_name!r} has shape {arr.shape}, expected (C, H, W)"
                    )
                blocks.append(BlockActivations(block_index=m, maps=arr))
            fc1 = self._pull(outputs, self.profile.fc1_tensor).reshape(-1)
            fc2 = self._pull(outputs, self.profile.fc2_tensor).reshape(-1)
            probs = None
            if self.profile.class_probs_tensor is not None:
                probs = self._pull(outputs, self.profile.class_probs_tensor).reshape(-1)
        acts = NetworkActivations(
            blocks=tuple(blocks), fc1=fc1, fc2=fc2, class_probs=probs
        )
        require_valid_shapes(acts, self.profile.config)
        return acts

    def activations_for_file(self, path) -> NetworkActivations:
        """Load, preprocess, and run one image file."""
        return self.activations_for(prepare_input(path, self.profile.config))
