import numpy as np
import pytest

from eventsb.errors import DataFormatError
from eventsb.events import EventHistogram, SceneConfig, bin_events, generate_night_scene
from eventsb.io import read_histogram, read_stream, write_histogram, write_stream


def test_histogram_file_size_from_layout(tmp_path):
    # magic(4) + 3*u32(12) + tag(1) + 2*1*2*2 floats (32) = 49 bytes
    h = EventHistogram(np.zeros((2, 2, 2), np.float32), bins=1)
    path = tmp_path / "zeros.evh"
    write_histogram(path, h)
    assert path.stat().st_size == 49


def test_histogram_round_trip_exact(tmp_path):
    rng = np.random.default_rng(0)
    data = (rng.random((6, 5, 7)) * 11).astype(np.float32)
    h = EventHistogram(data, bins=3, domain_tag="night")
    path = tmp_path / "h.evh"
    write_histogram(path, h)
    back = read_histogram(path)
    assert back == h
    assert back.data.dtype == np.float32


def test_histogram_bad_magic_named(tmp_path):
    path = tmp_path / "bad.evh"
    h = EventHistogram(np.zeros((2, 2, 2), np.float32), bins=1)
    write_histogram(path, h)
    raw = bytearray(path.read_bytes())
    raw[:4] = b"EVH2"
    path.write_bytes(bytes(raw))
    with pytest.raises(DataFormatError) as err:
        read_histogram(path)
    assert "EVH2" in str(err.value)
    assert err.value.offset == 0


def test_histogram_truncated_payload(tmp_path):
    path = tmp_path / "trunc.evh"
    write_histogram(path, EventHistogram(np.zeros((2, 4, 4), np.float32), bins=1))
    raw = path.read_bytes()
    path.write_bytes(raw[:-5])
    with pytest.raises(DataFormatError) as err:
        read_histogram(path)
    assert "byte" in str(err.value)


def test_histogram_unknown_tag(tmp_path):
    path = tmp_path / "tag.evh"
    write_histogram(path, EventHistogram(np.zeros((2, 2, 2), np.float32), bins=1))
    raw = bytearray(path.read_bytes())
    raw[16] = 9
    path.write_bytes(bytes(raw))
    with pytest.raises(DataFormatError) as err:
        read_histogram(path)
    assert "9" in str(err.value)


def test_stream_round_trip(tmp_path):
    stream = generate_night_scene(SceneConfig(seed=2))
    path = tmp_path / "s.evs"
    write_stream(path, stream)
    assert read_stream(path) == stream


def test_stream_bad_magic(tmp_path):
    path = tmp_path / "s.evs"
    write_stream(path, generate_night_scene(SceneConfig(seed=2)))
    raw = bytearray(path.read_bytes())
    raw[:4] = b"EVSX"
    path.write_bytes(bytes(raw))
    with pytest.raises(DataFormatError) as err:
        read_stream(path)
    assert err.value.offset == 0


def test_stream_truncated_record(tmp_path):
    path = tmp_path / "s.evs"
    write_stream(path, generate_night_scene(SceneConfig(seed=2)))
    raw = path.read_bytes()
    path.write_bytes(raw[:-3])
    with pytest.raises(DataFormatError):
        read_stream(path)


def test_stream_invalid_polarity_offset(tmp_path):
    path = tmp_path / "s.evs"
    stream = generate_night_scene(SceneConfig(seed=2))
    write_stream(path, stream)
    raw = bytearray(path.read_bytes())
    raw[28 + 12] = 0  # polarity byte of the first record
    path.write_bytes(bytes(raw))
    with pytest.raises(DataFormatError) as err:
        read_stream(path)
    assert err.value.offset == 40


@pytest.mark.parametrize("bins", [1, 3, 8])
def test_round_trip_across_bins(tmp_path, bins):
    h = bin_events(generate_night_scene(SceneConfig(seed=7)), bins)
    h.domain_tag = "translated"
    path = tmp_path / f"b{bins}.evh"
    write_histogram(path, h)
    assert read_histogram(path) == h


def test_write_is_atomic_no_temp_left(tmp_path):
    path = tmp_path / "a.evh"
    write_histogram(path, EventHistogram(np.zeros((2, 2, 2), np.float32), bins=1))
    leftovers = [p for p in tmp_path.iterdir() if p.suffix == ".tmp"]
    assert leftovers == []
