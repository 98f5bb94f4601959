"""Voxel grid carriers and bit-exact NIfTI-1 reading/writing.

Only the narrow NIfTI-1 subset that BraTS-style data uses is supported:
single-file images (magic ``n+1\\0``), datatypes uint8 (2), int16 (4) and
float32 (16), optional gzip container, either byte order. Everything else
is a hard error so the parser can be tested bit-exactly.
"""

from __future__ import annotations

import gzip
import math
from dataclasses import dataclass
from typing import IO, Iterable, Mapping, Optional

import numpy as np

from .errors import (
    BadMagic,
    GridMismatch,
    IoFailure,
    LabelOverflow,
    Not3D,
    TruncatedData,
    UnsupportedDatatype,
)

FLOAT_INTENSITY = "float-intensity"
INTEGER_LABEL = "integer-label"

CHANNEL_NAMES = ("T1", "T1CE", "T2", "FLAIR")

SPACING_TOL_MM = 1e-6
AFFINE_TOL = 1e-5

HEADER_SIZE = 348
# Single-file header is followed by a 4 byte extension indicator, so the
# smallest legal payload offset is 352.
DEFAULT_VOX_OFFSET = 352

_MAGIC_SINGLE = b"n+1\x00"
_MAGIC_PAIR = b"ni1\x00"

# code -> numpy dtype char, for the supported on-disk datatypes
_DTYPES = {2: "u1", 4: "i2", 16: "f4"}
_DTYPE_CODES = {"uint8": 2, "int16": 4, "float32": 16}
_BITPIX = {2: 8, 4: 16, 16: 32}

# NIfTI-1 header layout (offset comments are byte positions in the file).
_HEADER_FIELDS = [
    ("sizeof_hdr", "i4"),       # 0
    ("data_type", "S10"),       # 4
    ("db_name", "S18"),         # 14
    ("extents", "i4"),          # 32
    ("session_error", "i2"),    # 36
    ("regular", "S1"),          # 38
    ("dim_info", "u1"),         # 39
    ("dim", "i2", (8,)),        # 40
    ("intent_p1", "f4"),        # 56
    ("intent_p2", "f4"),        # 60
    ("intent_p3", "f4"),        # 64
    ("intent_code", "i2"),      # 68
    ("datatype", "i2"),         # 70
    ("bitpix", "i2"),           # 72
    ("slice_start", "i2"),      # 74
    ("pixdim", "f4", (8,)),     # 76
    ("vox_offset", "f4"),       # 108
    ("scl_slope", "f4"),        # 112
    ("scl_inter", "f4"),        # 116
    ("slice_end", "i2"),        # 120
    ("slice_code", "u1"),       # 122
    ("xyzt_units", "u1"),       # 123
    ("cal_max", "f4"),          # 124
    ("cal_min", "f4"),          # 128
    ("slice_duration", "f4"),   # 132
    ("toffset", "f4"),          # 136
    ("glmax", "i4"),            # 140
    ("glmin", "i4"),            # 144
    ("descrip", "S80"),         # 148
    ("aux_file", "S24"),        # 228
    ("qform_code", "i2"),       # 252
    ("sform_code", "i2"),       # 254
    ("quatern_b", "f4"),        # 256
    ("quatern_c", "f4"),        # 260
    ("quatern_d", "f4"),        # 264
    ("qoffset_x", "f4"),        # 268
    ("qoffset_y", "f4"),        # 272
    ("qoffset_z", "f4"),        # 276
    ("srow_x", "f4", (4,)),     # 280
    ("srow_y", "f4", (4,)),     # 296
    ("srow_z", "f4", (4,)),     # 312
    ("intent_name", "S16"),     # 328
    ("magic", "S4"),            # 344
]

HEADER_DTYPE = np.dtype(_HEADER_FIELDS)
assert HEADER_DTYPE.itemsize == HEADER_SIZE


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class VoxelGrid:
    """A 3D scalar/integer volume with physical spacing and affine.

    ``data`` is indexed ``[x, y, z]``; on disk x varies fastest. Arrays are
    frozen on construction so grids can be shared across workers.
    """

    data: np.ndarray
    spacing: tuple[float, float, float]
    affine: np.ndarray
    value_kind: str

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 3:
            raise ValueError(f"grid data must be 3D, got shape {data.shape}")
        spacing = tuple(float(s) for s in self.spacing)
        if len(spacing) != 3 or any(s <= 0 for s in spacing):
            raise ValueError(f"spacing must be 3 positive reals, got {spacing}")
        affine = np.array(self.affine, dtype=np.float64)
        if affine.shape != (4, 4):
            raise ValueError(f"affine must be 4x4, got {affine.shape}")
        if not np.array_equal(affine[3], [0.0, 0.0, 0.0, 1.0]):
            raise ValueError(f"affine last row must be (0,0,0,1), got {affine[3]}")
        if self.value_kind not in (FLOAT_INTENSITY, INTEGER_LABEL):
            raise ValueError(f"unknown value_kind {self.value_kind!r}")
        object.__setattr__(self, "data", _freeze(data))
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "affine", _freeze(affine))

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.data.shape

    def with_data(self, data: np.ndarray, value_kind: Optional[str] = None) -> "VoxelGrid":
        """Same grid geometry, new payload."""
        return VoxelGrid(data, self.spacing, self.affine, value_kind or self.value_kind)


@dataclass(frozen=True)
class BinaryMask:
    """A boolean volume on a VoxelGrid geometry."""

    bits: np.ndarray
    spacing: tuple[float, float, float]
    affine: np.ndarray

    def __post_init__(self):
        bits = np.asarray(self.bits)
        if bits.ndim != 3:
            raise ValueError(f"mask must be 3D, got shape {bits.shape}")
        if bits.dtype != np.bool_:
            bits = bits.astype(bool)
        spacing = tuple(float(s) for s in self.spacing)
        if any(s <= 0 for s in spacing):
            raise ValueError(f"spacing must be positive, got {spacing}")
        affine = np.array(self.affine, dtype=np.float64)
        object.__setattr__(self, "bits", _freeze(bits))
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "affine", _freeze(affine))

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.bits.shape

    @classmethod
    def like(cls, grid: VoxelGrid, bits: np.ndarray) -> "BinaryMask":
        return cls(bits, grid.spacing, grid.affine)


@dataclass(frozen=True)
class Study:
    """One patient's co-registered channel set plus optional reference labels."""

    patient_id: str
    channels: Mapping[str, VoxelGrid]
    reference: Optional[VoxelGrid] = None

    def __post_init__(self):
        channels = dict(self.channels)
        for name in channels:
            if name not in CHANNEL_NAMES:
                raise ValueError(f"unknown channel {name!r}, expected one of {CHANNEL_NAMES}")
        grids = list(channels.values())
        if self.reference is not None:
            grids.append(self.reference)
        if grids:
            validate_same_grid(grids)
        object.__setattr__(self, "channels", channels)

    def with_channel(self, name: str, grid: VoxelGrid) -> "Study":
        channels = dict(self.channels)
        channels[name] = grid
        return Study(self.patient_id, channels, self.reference)


def validate_same_grid(grids: Iterable) -> None:
    """Check that all grids share dims, spacing and affine.

    Raises GridMismatch naming the first offending axis/field. Spacing is
    compared within 1e-6 mm, affine entries within 1e-5.
    """
    grids = list(grids)
    if not grids:
        raise ValueError("validate_same_grid needs at least one grid")
    ref = grids[0]
    for g in grids[1:]:
        for ax, name in enumerate("xyz"):
            if g.dims[ax] != ref.dims[ax]:
                raise GridMismatch(f"dims axis {name}", f"{ref.dims[ax]} vs {g.dims[ax]}")
        for ax, name in enumerate("xyz"):
            if abs(g.spacing[ax] - ref.spacing[ax]) > SPACING_TOL_MM:
                raise GridMismatch(
                    f"spacing axis {name}", f"{ref.spacing[ax]} vs {g.spacing[ax]}"
                )
        if np.abs(g.affine - ref.affine).max() > AFFINE_TOL:
            raise GridMismatch("affine", "entries differ beyond 1e-5")


# --- reading ---


def _open_for_read(path) -> IO[bytes]:
    raw = open(path, "rb")
    head = raw.read(2)
    raw.seek(0)
    if head == b"\x1f\x8b":
        return gzip.GzipFile(fileobj=raw, mode="rb")
    return raw


def _read_exact(fobj: IO[bytes], n: int) -> bytes:
    buf = fobj.read(n)
    if len(buf) < n:
        raise TruncatedData(f"expected {n} bytes, file ends after {len(buf)}")
    return buf


def _parse_header(raw: bytes) -> np.void:
    magic = raw[344:348]
    if magic == _MAGIC_PAIR:
        raise BadMagic("paired .hdr/.img NIfTI-1 files are unsupported; use single-file n+1")
    if magic != _MAGIC_SINGLE:
        raise BadMagic(f"not a NIfTI-1 single file, magic {magic!r}")
    hdr = np.frombuffer(raw, dtype=HEADER_DTYPE, count=1)[0]
    if int(hdr["sizeof_hdr"]) != HEADER_SIZE:
        swapped = np.frombuffer(raw, dtype=HEADER_DTYPE.newbyteorder(), count=1)[0]
        if int(swapped["sizeof_hdr"]) != HEADER_SIZE:
            raise BadMagic(f"sizeof_hdr is {int(hdr['sizeof_hdr'])} under either byte order")
        hdr = swapped
    return hdr


def _header_dims(hdr: np.void) -> tuple[int, int, int]:
    dim = hdr["dim"]
    ndim = int(dim[0])
    if ndim < 1 or ndim > 7:
        raise Not3D(f"dim[0] is {ndim}")
    # Dims past the third must be degenerate; dims past dim[0] are ignored.
    for ax in range(4, ndim + 1):
        if int(dim[ax]) > 1:
            raise Not3D(f"dim[{ax}] is {int(dim[ax])}, expected 1")
    shape = [int(dim[ax]) if ax <= ndim else 1 for ax in (1, 2, 3)]
    if any(s < 1 for s in shape):
        raise Not3D(f"non-positive dimensions {tuple(shape)}")
    return tuple(shape)


def _quaternion_affine(hdr: np.void, spacing: tuple[float, float, float]) -> np.ndarray:
    b = float(hdr["quatern_b"])
    c = float(hdr["quatern_c"])
    d = float(hdr["quatern_d"])
    a = math.sqrt(max(0.0, 1.0 - (b * b + c * c + d * d)))
    rot = np.array(
        [
            [a * a + b * b - c * c - d * d, 2 * (b * c - a * d), 2 * (b * d + a * c)],
            [2 * (b * c + a * d), a * a + c * c - b * b - d * d, 2 * (c * d - a * b)],
            [2 * (b * d - a * c), 2 * (c * d + a * b), a * a + d * d - b * b - c * c],
        ]
    )
    qfac = -1.0 if float(hdr["pixdim"][0]) == -1.0 else 1.0
    affine = np.eye(4)
    affine[:3, :3] = rot * np.array([spacing[0], spacing[1], qfac * spacing[2]])
    affine[:3, 3] = [float(hdr["qoffset_x"]), float(hdr["qoffset_y"]), float(hdr["qoffset_z"])]
    return affine


def _header_affine(hdr: np.void, spacing: tuple[float, float, float]) -> np.ndarray:
    # Precedence: sform > qform > pixdim diagonal.
    if int(hdr["sform_code"]) > 0:
        affine = np.eye(4)
        affine[0] = hdr["srow_x"]
        affine[1] = hdr["srow_y"]
        affine[2] = hdr["srow_z"]
        return affine
    if int(hdr["qform_code"]) > 0:
        return _quaternion_affine(hdr, spacing)
    return np.diag([spacing[0], spacing[1], spacing[2], 1.0])


def read_volume(path) -> VoxelGrid:
    """Read a .nii or .nii.gz file into a VoxelGrid.

    Datatypes uint8/int16 map to integer-label grids, float32 (or anything
    with scl_slope scaling applied) to float-intensity. Never reads past
    the payload the header declares.
    """
    try:
        fobj = _open_for_read(path)
    except OSError as exc:
        raise IoFailure(f"cannot open {path}: {exc}") from exc
    with fobj:
        hdr = _parse_header(_read_exact(fobj, HEADER_SIZE))
        dims = _header_dims(hdr)

        code = int(hdr["datatype"])
        if code not in _DTYPES:
            raise UnsupportedDatatype(f"datatype code {code}; supported: 2, 4, 16")
        dtype = np.dtype(_DTYPES[code])
        if not hdr.dtype.isnative:
            dtype = dtype.newbyteorder()

        pixdim = hdr["pixdim"]
        # pixdim entries of 0 occur in sloppy files; fall back to 1 mm.
        spacing = tuple(float(abs(pixdim[ax])) or 1.0 for ax in (1, 2, 3))
        affine = _header_affine(hdr, spacing)

        vox_offset = int(float(hdr["vox_offset"]))
        if vox_offset < HEADER_SIZE:
            vox_offset = DEFAULT_VOX_OFFSET
        skip = vox_offset - HEADER_SIZE
        if skip:
            _read_exact(fobj, skip)

        n_voxels = dims[0] * dims[1] * dims[2]
        payload = _read_exact(fobj, n_voxels * dtype.itemsize)

    data = np.frombuffer(payload, dtype=dtype).reshape(dims, order="F")

    slope = float(hdr["scl_slope"])
    inter = float(hdr["scl_inter"])
    if math.isnan(slope):
        slope = 0.0
    if math.isnan(inter):
        inter = 0.0
    scaled = slope != 0.0 and not (slope == 1.0 and inter == 0.0)
    if scaled:
        data = data.astype(np.float32) * np.float32(slope) + np.float32(inter)

    if data.dtype.kind == "f" or scaled:
        kind = FLOAT_INTENSITY
    else:
        kind = INTEGER_LABEL
    return VoxelGrid(data, spacing, affine, kind)


# --- writing ---


def _encode_payload(grid: VoxelGrid) -> tuple[np.ndarray, int]:
    if grid.value_kind == INTEGER_LABEL:
        data = grid.data
        if data.dtype.kind not in "iu":
            raise LabelOverflow(f"integer-label grid holds {data.dtype} data")
        lo, hi = (int(data.min()), int(data.max())) if data.size else (0, 0)
        if lo < 0 or hi > 255:
            raise LabelOverflow(f"label values [{lo}, {hi}] do not fit in uint8")
        return data.astype("<u1"), _DTYPE_CODES["uint8"]
    return grid.data.astype("<f4"), _DTYPE_CODES["float32"]


def _build_header(grid: VoxelGrid, code: int) -> bytes:
    hdr = np.zeros((), dtype=HEADER_DTYPE)
    hdr["sizeof_hdr"] = HEADER_SIZE
    hdr["regular"] = b"r"
    dim = np.ones(8, dtype=np.int16)
    dim[0] = 3
    dim[1:4] = grid.dims
    hdr["dim"] = dim
    hdr["datatype"] = code
    hdr["bitpix"] = _BITPIX[code]
    pixdim = np.zeros(8, dtype=np.float32)
    pixdim[0] = 1.0
    pixdim[1:4] = grid.spacing
    hdr["pixdim"] = pixdim
    hdr["vox_offset"] = float(DEFAULT_VOX_OFFSET)
    hdr["scl_slope"] = 0.0  # 0 means "no scaling" by convention
    hdr["scl_inter"] = 0.0
    hdr["xyzt_units"] = 2  # millimeters
    hdr["sform_code"] = 1
    hdr["qform_code"] = 0
    hdr["srow_x"] = grid.affine[0].astype(np.float32)
    hdr["srow_y"] = grid.affine[1].astype(np.float32)
    hdr["srow_z"] = grid.affine[2].astype(np.float32)
    hdr["magic"] = _MAGIC_SINGLE
    return hdr.tobytes()


def write_volume(grid: VoxelGrid, path) -> None:
    """Write a VoxelGrid as single-file NIfTI-1 (gzipped when path ends .gz).

    float-intensity grids get a float32 payload, integer-label grids uint8.
    Round-trips bit-exactly through read_volume.
    """
    data, code = _encode_payload(grid)
    blob = b"".join(
        [_build_header(grid, code), b"\x00\x00\x00\x00", data.ravel(order="F").tobytes()]
    )
    try:
        if str(path).endswith(".gz"):
            with open(path, "wb") as raw:
                # mtime pinned so identical grids produce identical files
                with gzip.GzipFile(fileobj=raw, mode="wb", mtime=0) as zf:
                    zf.write(blob)
        else:
            with open(path, "wb") as raw:
                raw.write(blob)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc
