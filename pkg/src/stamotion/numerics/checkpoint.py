"""Parameter checkpoints in the shared container format."""

from __future__ import annotations

from ..container import ContainerError, read_container, write_container

CKPT_VERSION = "sta-motion-ckpt/1"


def save_checkpoint(path, module, meta=None):
    sections = {name: p.data for name, p in module.named_parameters()}
    names = list(sections)
    if len(set(names)) != len(names):
        raise ContainerError("duplicate parameter names")
    write_container(path, CKPT_VERSION, sections, meta)


def load_checkpoint(path):
    """Return ``(meta, state)``; state values are float32 arrays."""
    return read_container(path, CKPT_VERSION)
