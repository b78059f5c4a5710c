"""File formats: stimulus protocols, recordings, and PGM frame renders."""
from __future__ import annotations

import csv
import io
from pathlib import Path

import numpy as np

from .errors import IoError, ParseError, ShapeMismatch
from .lattice import TopographicLattice
from .wavesim import NeuronModel, Recording, StimulusEvent, Variant

PROTOCOL_FIELDS = ("x", "y", "onset", "duration", "amplitude")
CSV_HEADER = "step,unit_x,unit_y,potential,spiked"


def _open_write(path, mode="w"):
    try:
        return open(path, mode)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def _read_bytes(path) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc


# ---------------------------------------------------------------- protocols


def write_protocol(protocol, path) -> None:
    with _open_write(path) as fh:
        fh.write(",".join(PROTOCOL_FIELDS) + "\n")
        for ev in protocol:
            x, y = ev.position
            fh.write(f"{x},{y},{ev.onset},{ev.duration},{ev.amplitude!r}\n")


def parse_protocol(text: str, path=None) -> list[StimulusEvent]:
    """One event per line: ``x,y,onset,duration,amplitude``.

    A header line naming the fields is optional; blank lines and ``#``
    comments are skipped. Errors report the 1-based line and the field.
    """
    events = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = [p.strip() for p in line.split(",")]
        if parts[0].lower() == "x":
            if tuple(p.lower() for p in parts) != PROTOCOL_FIELDS:
                raise ParseError(f"bad header {line!r}", line=lineno, field="header", path=path)
            continue
        if len(parts) != len(PROTOCOL_FIELDS):
            raise ParseError(f"expected {len(PROTOCOL_FIELDS)} fields, got {len(parts)}",
                             line=lineno, field=PROTOCOL_FIELDS[min(len(parts), 4)], path=path)
        values = {}
        for name, text_value in zip(PROTOCOL_FIELDS, parts):
            try:
                values[name] = float(text_value) if name == "amplitude" else int(text_value)
            except ValueError:
                raise ParseError(f"not a number: {text_value!r}", line=lineno, field=name,
                                 path=path) from None
        for name in ("x", "y", "onset"):
            if values[name] < 0:
                raise ParseError(f"{name} must be >= 0", line=lineno, field=name, path=path)
        if values["duration"] < 1:
            raise ParseError("duration must be >= 1", line=lineno, field="duration", path=path)
        if not values["amplitude"] > 0:
            raise ParseError("amplitude must be > 0", line=lineno, field="amplitude", path=path)
        events.append(StimulusEvent((values["x"], values["y"]), values["onset"],
                                    values["duration"], values["amplitude"]))
    return events


def parse_protocol_file(path) -> list[StimulusEvent]:
    return parse_protocol(_read_bytes(path).decode(), path=path)


# ---------------------------------------------------------------- recordings


def write_recording(recording: Recording, path, format: str = "raw_f32") -> None:
    """Write ``recording`` as ``raw_f32`` (bit-exact float32 frames) or ``csv_frames``.

    raw_f32: one text header line ``width=.. height=.. steps=.. dt=.. raster=0|1``
    then little-endian float32 potential frames, time-major and row-major,
    followed by the spike raster as 0/1 float32 frames when ``raster=1``.
    """
    if recording.n_steps == 0:
        raise ShapeMismatch("cannot write an empty recording")
    t, h, w = recording.frames.shape
    if format == "raw_f32":
        has_raster = recording.raster is not None
        header = f"width={w} height={h} steps={t} dt={float(recording.dt)!r} raster={int(has_raster)}\n"
        with _open_write(path, "wb") as fh:
            fh.write(header.encode("ascii"))
            fh.write(np.ascontiguousarray(recording.frames, dtype="<f4").tobytes())
            if has_raster:
                fh.write(np.ascontiguousarray(recording.raster, dtype="<f4").tobytes())
    elif format == "csv_frames":
        steps, ys, xs = np.meshgrid(np.arange(t), np.arange(h), np.arange(w), indexing="ij")
        spiked = recording.raster if recording.raster is not None else np.zeros((t, h, w), bool)
        table = np.column_stack([steps.ravel(), xs.ravel(), ys.ravel(),
                                 recording.frames.ravel(), spiked.ravel().astype(int)])
        with _open_write(path) as fh:
            np.savetxt(fh, table, fmt=["%d", "%d", "%d", "%.17g", "%d"], delimiter=",",
                       header=CSV_HEADER, comments="")
    else:
        raise ValueError(f"unknown recording format {format!r}")


def _attach(frames, raster, dt, lattice, neuron):
    t, h, w = frames.shape
    if lattice is None:
        lattice = TopographicLattice(w, h)
    elif lattice.shape != (h, w):
        raise ShapeMismatch(f"file holds {w}x{h} frames, lattice is {lattice.width}x{lattice.height}")
    if neuron is None:
        neuron = NeuronModel(variant=Variant.SPIKING if raster is not None else Variant.RATE)
    return Recording(frames, dt, lattice, neuron, raster=raster)


def read_recording(path, lattice=None, neuron=None, dt: float | None = None) -> Recording:
    """Read either format, detected from the first bytes of the file.

    ``raw_f32`` frames come back as float32 arrays, bit-identical to what was
    written. ``csv_frames`` carries no time step, so ``dt`` defaults to 1.
    """
    data = _read_bytes(path)
    if data.startswith(b"width="):
        nl = data.index(b"\n")
        try:
            fields = dict(tok.split("=", 1) for tok in data[:nl].decode("ascii").split())
            w, h, t = int(fields["width"]), int(fields["height"]), int(fields["steps"])
            file_dt = float(fields["dt"])
            has_raster = fields.get("raster", "0") == "1"
        except (KeyError, ValueError) as exc:
            raise ParseError(f"bad raw_f32 header: {exc}", line=1, field="header", path=path) from exc
        body = np.frombuffer(data, dtype="<f4", offset=nl + 1)
        n = t * h * w
        if body.size != n * (2 if has_raster else 1):
            raise ParseError(f"expected {n} floats per block, file holds {body.size}",
                             line=2, field="frames", path=path)
        frames = body[:n].reshape(t, h, w).copy()
        raster = body[n:].reshape(t, h, w) > 0.5 if has_raster else None
        return _attach(frames, raster, dt if dt is not None else file_dt, lattice, neuron)
    if data.startswith(CSV_HEADER.encode()):
        rows = list(csv.reader(io.StringIO(data.decode())))[1:]
        try:
            arr = np.array([[float(v) for v in r] for r in rows if r])
        except ValueError as exc:
            raise ParseError(str(exc), field="potential", path=path) from exc
        t, w, h = (int(arr[:, i].max()) + 1 for i in range(3))
        frames = np.zeros((t, h, w))
        spikes = np.zeros((t, h, w), bool)
        s, x, y = arr[:, 0].astype(int), arr[:, 1].astype(int), arr[:, 2].astype(int)
        frames[s, y, x] = arr[:, 3]
        spikes[s, y, x] = arr[:, 4] > 0.5
        raster = spikes if (neuron is None or neuron.variant is Variant.SPIKING) else None
        return _attach(frames, raster, dt if dt is not None else 1.0, lattice, neuron)
    raise ParseError("unrecognized recording format", line=1, field="header", path=path)


# ---------------------------------------------------------------- rendering


def to_gray(frames: np.ndarray) -> np.ndarray:
    """Min-max scale the whole stack to 0..255; a constant stack maps to mid-gray."""
    frames = np.asarray(frames, dtype=float)
    lo, hi = float(frames.min()), float(frames.max())
    if hi == lo:
        return np.full(frames.shape, 128, dtype=np.uint8)
    return np.round((frames - lo) / (hi - lo) * 255).astype(np.uint8)


def write_pgm(image: np.ndarray, path) -> None:
    h, w = image.shape
    with _open_write(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(image, dtype=np.uint8).tobytes())


def read_pgm(path) -> np.ndarray:
    data = _read_bytes(path)
    tokens, pos = [], 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    pos += 1  # single whitespace byte before the raster
    if tokens[0] != b"P5":
        raise ParseError("not a binary PGM", line=1, field="magic", path=path)
    w, h, maxval = (int(t) for t in tokens[1:])
    if maxval != 255:
        raise ParseError("only 8-bit PGM supported", line=3, field="maxval", path=path)
    return np.frombuffer(data[pos : pos + w * h], dtype=np.uint8).reshape(h, w)


def render_frames(recording: Recording, out_dir) -> list[Path]:
    """One binary PGM per frame; row ``y`` of the image is lattice row ``y``."""
    if recording.n_steps == 0:
        raise ShapeMismatch("cannot render an empty recording")
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create {out}: {exc}") from exc
    gray = to_gray(recording.frames)
    paths = []
    for i, img in enumerate(gray):
        p = out / f"frame_{i:05d}.pgm"
        write_pgm(img, p)
        paths.append(p)
    return paths
