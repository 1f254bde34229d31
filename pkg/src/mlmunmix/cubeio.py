"""File formats: raw binary cubes with text sidecars, round-trip-exact
CSV matrices, flat key=value configs and 8-bit grayscale rasters.

Cube payloads are little-endian float64, band-interleaved by pixel (each
pixel's d-vector is contiguous); the sidecar ``<payload>.hdr`` carries the
dimensions.  CSV floats are written with 17 significant digits so float64
values survive a write/read cycle bit-exactly.  See FORMATS.md for the
full catalogue.
"""

import os
from dataclasses import dataclass

import numpy as np

from .core import EndmemberMatrix, HyperCube, asarray64

_FLOAT_FMT = "%.17g"
_CUBE_FORMAT = "mlm-cube-v1"


# ---------------------------------------------------------------------------
# key = value text files
# ---------------------------------------------------------------------------

def write_key_value(path, pairs):
    lines = [f"{key} = {value}" for key, value in pairs.items()]
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def read_key_value(path) -> dict:
    pairs = {}
    with open(path, "r", encoding="ascii") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
            key, value = line.split("=", 1)
            pairs[key.strip()] = value.strip()
    return pairs


# ---------------------------------------------------------------------------
# cubes
# ---------------------------------------------------------------------------

def write_cube(path, cube: HyperCube):
    """Write payload to ``path`` and the header sidecar to ``path + '.hdr'``."""
    X = cube.data
    d, n = X.shape
    with open(path, "wb") as fh:
        fh.write(np.ascontiguousarray(X.T, dtype="<f8").tobytes())
    header = {
        "format": _CUBE_FORMAT,
        "dtype": "float64",
        "byteorder": "little",
        "bands": d,
        "pixels": n,
    }
    if cube.height is not None:
        header["height"] = cube.height
        header["width"] = cube.width
    if cube.bands is not None:
        header["band_labels"] = ",".join(repr(b) for b in cube.bands)
    write_key_value(str(path) + ".hdr", header)


def read_cube(path) -> HyperCube:
    header = read_key_value(str(path) + ".hdr")
    if header.get("format") != _CUBE_FORMAT:
        raise ValueError(f"{path}.hdr: unknown cube format {header.get('format')!r}")
    if header.get("dtype") != "float64" or header.get("byteorder") != "little":
        raise ValueError(f"{path}.hdr: unsupported dtype/byteorder")
    d = int(header["bands"])
    n = int(header["pixels"])
    payload = open(path, "rb").read()
    if len(payload) != d * n * 8:
        raise ValueError(
            f"{path}: payload is {len(payload)} bytes, header says {d * n * 8}"
        )
    X = np.frombuffer(payload, dtype="<f8").reshape(n, d).T
    height = int(header["height"]) if "height" in header else None
    width = int(header["width"]) if "width" in header else None
    bands = None
    if "band_labels" in header:
        bands = tuple(float(b) for b in header["band_labels"].split(","))
    return HyperCube(X, bands=bands, height=height, width=width)


# ---------------------------------------------------------------------------
# matrices
# ---------------------------------------------------------------------------

def write_matrix_csv(path, arr):
    np.savetxt(path, np.atleast_2d(asarray64(arr)), delimiter=",", fmt=_FLOAT_FMT)


def read_matrix_csv(path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", ndmin=2)


def write_endmember_csv(path, E, names=None):
    """Endmember matrix (bands x m) with a header row of column names."""
    E = asarray64(E)
    if names is None:
        names = [f"endmember_{k + 1}" for k in range(E.shape[1])]
    np.savetxt(
        path, E, delimiter=",", fmt=_FLOAT_FMT,
        header=",".join(names), comments="",
    )


def read_endmember_csv(path):
    """Returns (matrix, names) for a named endmember CSV."""
    with open(path, "r", encoding="ascii") as fh:
        names = [c.strip() for c in fh.readline().strip().split(",")]
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[1] != len(names):
        raise ValueError(
            f"{path}: header names {len(names)} columns, data has {data.shape[1]}"
        )
    return data, names


# ---------------------------------------------------------------------------
# grayscale rasters
# ---------------------------------------------------------------------------

def write_raster_png(path, image):
    """8-bit grayscale PNG under per-image linear scaling.

    The realized minimum and maximum are recorded in ``path + '.meta'`` so
    the mapping back to physical values is invertible.
    """
    from PIL import Image

    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2:
        raise ValueError(f"raster must be 2-d, got shape {image.shape}")
    lo = float(image.min())
    hi = float(image.max())
    if hi > lo:
        scaled = np.round(255.0 * (image - lo) / (hi - lo))
    else:
        scaled = np.zeros_like(image)
    Image.fromarray(scaled.astype(np.uint8), mode="L").save(path)
    write_key_value(
        str(path) + ".meta",
        {"min": _FLOAT_FMT % lo, "max": _FLOAT_FMT % hi, "scale": "linear"},
    )


# ---------------------------------------------------------------------------
# experiment configs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentConfig:
    """Complete, serializable description of one unmixing run."""

    mode: str
    m: int
    cube: str
    output: str
    seed: int = 0
    eta1: float = None          # None disables the absolute threshold
    sigma2: float = None        # per-sample noise power, enables eta1 = n * sigma2
    eta2: float = 1e-3
    max_outer_iterations: int = 500
    initial_endmembers: str = None   # CSV path; VCA runs when absent
    vca_snr_db: float = None
    threads: int = None

    def key_value_pairs(self) -> dict:
        pairs = {
            "mode": self.mode,
            "m": self.m,
            "cube": self.cube,
            "output": self.output,
            "seed": self.seed,
            "eta2": _FLOAT_FMT % self.eta2,
            "max_outer_iterations": self.max_outer_iterations,
        }
        if self.eta1 is not None:
            pairs["eta1"] = _FLOAT_FMT % self.eta1
        if self.sigma2 is not None:
            pairs["sigma2"] = _FLOAT_FMT % self.sigma2
        if self.initial_endmembers is not None:
            pairs["initial_endmembers"] = self.initial_endmembers
        if self.vca_snr_db is not None:
            pairs["vca_snr_db"] = _FLOAT_FMT % self.vca_snr_db
        if self.threads is not None:
            pairs["threads"] = self.threads
        return pairs


_CONFIG_KEYS = {
    "mode", "m", "cube", "output", "seed", "eta1", "sigma2", "eta2",
    "max_outer_iterations", "initial_endmembers", "vca_snr_db", "threads",
}


def write_experiment_config(path, config: ExperimentConfig):
    write_key_value(path, config.key_value_pairs())


def parse_experiment_config(path) -> ExperimentConfig:
    pairs = read_key_value(path)
    unknown = set(pairs) - _CONFIG_KEYS
    if unknown:
        raise ValueError(f"{path}: unknown config keys: {sorted(unknown)}")
    for required in ("mode", "m", "cube", "output"):
        if required not in pairs:
            raise ValueError(f"{path}: missing required key {required!r}")
    base = os.path.dirname(os.path.abspath(path))

    def resolve(p):
        return p if os.path.isabs(p) else os.path.join(base, p)

    return ExperimentConfig(
        mode=pairs["mode"],
        m=int(pairs["m"]),
        cube=resolve(pairs["cube"]),
        output=resolve(pairs["output"]),
        seed=int(pairs.get("seed", 0)),
        eta1=float(pairs["eta1"]) if "eta1" in pairs else None,
        sigma2=float(pairs["sigma2"]) if "sigma2" in pairs else None,
        eta2=float(pairs.get("eta2", 1e-3)),
        max_outer_iterations=int(pairs.get("max_outer_iterations", 500)),
        initial_endmembers=(
            resolve(pairs["initial_endmembers"])
            if "initial_endmembers" in pairs else None
        ),
        vca_snr_db=float(pairs["vca_snr_db"]) if "vca_snr_db" in pairs else None,
        threads=int(pairs["threads"]) if "threads" in pairs else None,
    )
