"""Run directories, atomic writes and the run manifest."""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
import time
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from pathlib import Path

from . import __version__
from .errors import InputError
from .rng import RNG_ALGORITHM

OUT_ROOT_ENV = "MODSPLIT_OUT"
DEFAULT_OUT_ROOT = "runs"


def out_root() -> Path:
    return Path(os.environ.get(OUT_ROOT_ENV) or DEFAULT_OUT_ROOT)


def atomic_write_bytes(path: str | os.PathLike, data: bytes) -> None:
    """Write via a temporary file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise


def atomic_write_text(path: str | os.PathLike, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def sha256_file(path: str | os.PathLike) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def digest_of(doc) -> str:
    """First 16 hex digits of the SHA-256 of canonical JSON."""
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class RunManifest:
    command: str
    config: dict
    config_digest: str
    master_seed: int | None = None
    tool: str = "modsplit"
    version: str = __version__
    rng: str = RNG_ALGORITHM
    timings: dict[str, float] = field(default_factory=dict)
    inputs: dict[str, str] = field(default_factory=dict)
    outputs: dict[str, str] = field(default_factory=dict)

    @contextmanager
    def stage(self, name: str):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.timings[name] = round(time.perf_counter() - t0, 6)

    def add_input(self, path: str | os.PathLike) -> None:
        self.inputs[str(path)] = sha256_file(path)

    def add_outputs(self, run_dir: str | os.PathLike, paths) -> None:
        run_dir = Path(run_dir)
        for p in paths:
            p = Path(p)
            self.outputs[p.relative_to(run_dir).as_posix()] = sha256_file(p)

    def write(self, run_dir: str | os.PathLike) -> Path:
        path = Path(run_dir) / manifest_name(self.command)
        atomic_write_text(path, json.dumps(asdict(self), indent=1, sort_keys=True) + "\n")
        return path


def manifest_name(command: str) -> str:
    return f"manifest-{command}.json"


def load_manifest(path: str | os.PathLike) -> RunManifest:
    try:
        doc = json.loads(Path(path).read_text())
        return RunManifest(**doc)
    except (json.JSONDecodeError, TypeError) as exc:
        raise InputError(f"{path}: not a run manifest ({exc})") from exc


def verify_manifest(path: str | os.PathLike) -> list[str]:
    """Problems found when re-checking a manifest; empty when it verifies.

    Output hashes are recomputed from the files next to the manifest and the
    config digest from the recorded effective config.
    """
    path = Path(path)
    m = load_manifest(path)
    problems = []
    if digest_of(m.config) != m.config_digest:
        problems.append("config digest does not match the recorded config")
    for rel, want in sorted(m.outputs.items()):
        f = path.parent / rel
        if not f.exists():
            problems.append(f"missing output {rel}")
        elif sha256_file(f) != want:
            problems.append(f"hash mismatch for {rel}")
    return problems
