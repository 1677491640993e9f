"""Parameter initialization and portable weight manifests.

A weight manifest is a single ``.npz`` archive holding one array per
state-dict entry plus a ``__index__`` member: a JSON table mapping each
entry name to its shape, dtype, and archive member. The index makes
shape mismatches and truncated archives detectable before any tensor is
copied into a module.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import torch
from torch import nn

INIT_STD = 0.02
_INDEX_KEY = "__index__"


def init_parameters(module: nn.Module, seed: int) -> None:
    """Initialize every conv in ``module`` from N(0, 0.02^2), biases to zero.

    BatchNorm layers are reset to identity (weight 1, bias 0, fresh running
    stats); modules that keep power-iteration state are re-seeded through
    their ``reset_power_iteration`` hook. The draw order follows module
    registration order, so a fixed seed gives a bit-identical parameter set.
    """
    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for m in module.modules():
            if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d)):
                m.weight.normal_(0.0, INIT_STD, generator=gen)
                if m.bias is not None:
                    m.bias.zero_()
            elif isinstance(m, nn.BatchNorm2d):
                if m.weight is not None:
                    m.weight.fill_(1.0)
                if m.bias is not None:
                    m.bias.zero_()
                m.reset_running_stats()
            if hasattr(m, "reset_power_iteration"):
                m.reset_power_iteration(gen)


def count_parameters(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters())


def save_weight_manifest(path: str | Path, module: nn.Module) -> Path:
    """Write a module's state dict to an ``.npz`` manifest with a JSON index."""
    path = Path(path)
    arrays = {}
    index = {}
    for name, tensor in module.state_dict().items():
        arr = tensor.detach().cpu().numpy()
        arrays[name] = arr
        index[name] = {
            "shape": list(arr.shape),
            "dtype": str(arr.dtype),
            "member": name,
        }
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savez(path, **{_INDEX_KEY: np.array(json.dumps(index, sort_keys=True))}, **arrays)
    return path


def load_weight_manifest(path: str | Path) -> dict[str, np.ndarray]:
    """Read a manifest back as {entry name: array}, validating the index."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"weight manifest not found: {path}")
    with np.load(path, allow_pickle=False) as archive:
        if _INDEX_KEY not in archive:
            raise ValueError(f"corrupt weight manifest (missing index): {path}")
        index = json.loads(str(archive[_INDEX_KEY]))
        arrays = {}
        for name, entry in index.items():
            member = entry["member"]
            if member not in archive:
                raise ValueError(f"corrupt weight manifest: member '{member}' missing")
            arr = archive[member]
            if list(arr.shape) != entry["shape"] or str(arr.dtype) != entry["dtype"]:
                raise ValueError(
                    f"corrupt weight manifest: member '{member}' does not match its index entry"
                )
            arrays[name] = arr
    return arrays


def load_module_from_manifest(module: nn.Module, path: str | Path, what: str = "module") -> None:
    """Load manifest arrays into ``module``, checking names and shapes first."""
    arrays = load_weight_manifest(path)
    state = module.state_dict()
    missing = sorted(set(state) - set(arrays))
    unexpected = sorted(set(arrays) - set(state))
    if missing or unexpected:
        raise ValueError(
            f"{what} weights do not match the manifest: "
            f"missing={missing or 'none'} unexpected={unexpected or 'none'}"
        )
    for name, arr in arrays.items():
        if tuple(arr.shape) != tuple(state[name].shape):
            raise ValueError(
                f"shape mismatch for layer '{name}': manifest {tuple(arr.shape)} "
                f"vs {what} {tuple(state[name].shape)}"
            )
    module.load_state_dict(
        {name: torch.from_numpy(arr.copy()) for name, arr in arrays.items()}
    )


def save_global_encoder_weights(path: str | Path, generator: nn.Module) -> Path:
    """Persist only the generator's global feature encoder."""
    encoder = _global_encoder(generator)
    return save_weight_manifest(path, encoder)


def load_global_encoder_weights(generator: nn.Module, path: str | Path) -> None:
    """Replace only the global feature encoder's parameters from a manifest."""
    encoder = _global_encoder(generator)
    load_module_from_manifest(encoder, path, what="global encoder")


def _global_encoder(generator: nn.Module) -> nn.Module:
    encoder = getattr(generator, "global_encoder", None)
    if encoder is None:
        raise ValueError("generator was built without a global feature encoder")
    return encoder
