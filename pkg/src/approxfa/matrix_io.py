"""CSV matrix files and JSON run manifests."""

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import MatrixParseError
from .linalg import SYMMETRY_TOL, CovMatrix

MANIFEST_SUFFIX = ".manifest.json"

__all__ = [
    "RunManifest",
    "manifest_path_for",
    "read_cov",
    "read_matrix",
    "sha256_file",
    "write_matrix",
]


def write_matrix(matrix, path):
    """Write a 1-D or 2-D array as row-major CSV with 17 significant digits."""
    M = np.asarray(matrix, dtype=float)
    if M.ndim == 1:
        M = M.reshape(-1, 1)
    if M.ndim != 2:
        raise ValueError("only vectors and matrices can be written")
    with open(path, "w", newline="") as fh:
        for row in M:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def read_matrix(path):
    """Read a rectangular numeric CSV. Blank lines are skipped."""
    rows = []
    width = None
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text:
                continue
            fields = text.split(",")
            if width is None:
                width = len(fields)
            elif len(fields) != width:
                raise MatrixParseError(
                    f"{path}: line {lineno} has {len(fields)} fields, expected {width}",
                    line=lineno,
                )
            try:
                rows.append([float(f) for f in fields])
            except ValueError as exc:
                raise MatrixParseError(f"{path}: line {lineno}: {exc}", line=lineno) from exc
    if not rows:
        raise MatrixParseError(f"{path}: no data", line=None)
    return np.array(rows)


def read_cov(path, symmetry_tol=SYMMETRY_TOL, require_pd=False):
    """Read a covariance CSV and validate it as a :class:`CovMatrix`."""
    return CovMatrix.from_array(read_matrix(path), symmetry_tol=symmetry_tol,
                                require_psd=False, require_pd=require_pd)


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def manifest_path_for(output):
    """Sidecar manifest path of an emitted file: ``<output>.manifest.json``."""
    return Path(str(output) + MANIFEST_SUFFIX)


@dataclass
class RunManifest:
    """Everything needed to rerun a CLI invocation and check its outputs.

    ``inputs`` and ``outputs`` map roles (``"sigma"``, ``"trace"``, ...) to
    paths; ``checksums`` maps the same roles to SHA-256 digests.
    """

    command: str
    argv: list
    inputs: dict = field(default_factory=dict)
    engines: list = field(default_factory=list)
    k: int = None
    split: list = None
    config: dict = field(default_factory=dict)
    seed: int = None
    outputs: dict = field(default_factory=dict)
    checksums: dict = field(default_factory=dict)

    def add_checksums(self):
        for role, path in {**self.inputs, **self.outputs}.items():
            self.checksums[role] = sha256_file(path)
        return self

    def to_json(self):
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text):
        return cls(**json.loads(text))

    def save(self, path):
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path):
        return cls.from_json(Path(path).read_text())
