import json
import struct

import numpy as np
import pytest

from robustrep.checkpoint import (
    MAGIC,
    BadMagicError,
    SizeMismatchError,
    TruncatedBlobError,
    VersionMismatchError,
    dumps_checkpoint,
    load_checkpoint,
    loads_checkpoint,
    save_checkpoint,
)
from robustrep.nn import build_repnet_s

META = {"config": {"eps": 0.5, "robust": True}, "seed": 17, "final_epoch": 30}


@pytest.fixture(scope="module")
def net():
    return build_repnet_s(10, seed=3, class_names=[f"c{i}" for i in range(10)])


def _split(blob):
    (hlen,) = struct.unpack_from("<I", blob, 5)
    return json.loads(blob[9:9 + hlen]), blob[9 + hlen:]


def _rebuild(header, body):
    h = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    return MAGIC + struct.pack("<I", len(h)) + h + body


def test_round_trip_is_bit_exact(net, tmp_path):
    path = str(tmp_path / "m.ckpt")
    save_checkpoint(net, META, path)
    ck = load_checkpoint(path)
    assert ck.network.architecture() == net.architecture()
    for k, v in net.state_dict().items():
        assert ck.network.params[k].data.tobytes() == v.tobytes()
    assert ck.class_names == net.class_names


def test_save_load_save_is_byte_identical(net, tmp_path):
    a = tmp_path / "a.ckpt"
    b = tmp_path / "b.ckpt"
    save_checkpoint(net, META, str(a))
    ck = load_checkpoint(str(a))
    save_checkpoint(ck.network, ck.metadata, str(b))
    assert a.read_bytes() == b.read_bytes()


def test_metadata_preserved_verbatim(net):
    ck = loads_checkpoint(dumps_checkpoint(net, META))
    assert ck.metadata == META
    assert ck.metadata["config"]["eps"] == 0.5 and ck.metadata["seed"] == 17


def test_layout_starts_with_magic_and_le_length(net):
    blob = dumps_checkpoint(net, META)
    assert blob[:5] == b"RREP1"
    header, body = _split(blob)
    assert header["version"] == 1
    assert len(body) == 4 * sum(int(np.prod(m["shape"])) for m in header["manifest"])
    first = header["manifest"][0]
    np.testing.assert_array_equal(
        np.frombuffer(body, "<f4", count=int(np.prod(first["shape"]))).reshape(first["shape"]),
        net.params[first["name"]].data)


def test_corrupted_magic(net):
    blob = bytearray(dumps_checkpoint(net))
    blob[0] ^= 0xFF
    with pytest.raises(BadMagicError):
        loads_checkpoint(bytes(blob))


def test_version_mismatch(net):
    header, body = _split(dumps_checkpoint(net))
    header["version"] = 99
    with pytest.raises(VersionMismatchError):
        loads_checkpoint(_rebuild(header, body))


def test_truncated_blob(net):
    with pytest.raises(TruncatedBlobError):
        loads_checkpoint(dumps_checkpoint(net)[:-3])


def test_truncated_header(net):
    with pytest.raises(TruncatedBlobError):
        loads_checkpoint(dumps_checkpoint(net)[:20])


def test_manifest_disagrees_with_architecture(net):
    header, body = _split(dumps_checkpoint(net))
    header["manifest"][0]["shape"] = [1, 1, 1, 1]
    with pytest.raises(SizeMismatchError):
        loads_checkpoint(_rebuild(header, body))


def test_trailing_bytes(net):
    with pytest.raises(SizeMismatchError):
        loads_checkpoint(dumps_checkpoint(net) + b"\0\0\0\0")
