import struct

import pytest

from blockexec.kvstore import FileStore, MemoryStore, open_store


@pytest.fixture(params=["memory", "file"])
def store(request, tmp_path):
    if request.param == "memory":
        yield MemoryStore()
    else:
        s = FileStore(str(tmp_path / "db.log"))
        yield s
        s.close()


def test_point_ops(store):
    assert store.get(b"k") is None
    store.put(b"k", b"v")
    assert store.get(b"k") == b"v"
    store.put(b"k", b"v2")
    assert store.get(b"k") == b"v2"
    assert len(store) == 1


def test_write_batch_and_scan(store):
    store.write_batch([(b"na", b"1"), (b"nb", b"2"), (b"da", b"3")])
    assert list(store.scan(b"n")) == [(b"na", b"1"), (b"nb", b"2")]
    assert list(store.scan(b"x")) == []


def test_file_store_reopen(tmp_path):
    path = str(tmp_path / "db.log")
    s = FileStore(path)
    s.write_batch([(b"a", b"1"), (b"b", b"2")])
    s.put(b"a", b"3")
    s.close()
    s2 = FileStore(path)
    assert s2.get(b"a") == b"3"
    assert s2.get(b"b") == b"2"
    s2.close()


def test_torn_tail_drops_only_last_batch(tmp_path):
    path = str(tmp_path / "db.log")
    s = FileStore(path)
    s.write_batch([(b"a", b"1")])
    s.write_batch([(b"b", b"2"), (b"c", b"3")])
    s.close()
    # chop bytes off the final record: that batch must vanish atomically
    with open(path, "r+b") as fh:
        fh.seek(0, 2)
        fh.truncate(fh.tell() - 3)
    s2 = FileStore(path)
    assert s2.get(b"a") == b"1"
    assert s2.get(b"b") is None
    assert s2.get(b"c") is None
    # the store must be appendable again after truncation
    s2.write_batch([(b"d", b"4")])
    s2.close()
    s3 = FileStore(path)
    assert s3.get(b"d") == b"4"
    s3.close()


def test_corrupt_checksum_drops_batch(tmp_path):
    path = str(tmp_path / "db.log")
    s = FileStore(path)
    s.write_batch([(b"a", b"1")])
    end_first = s._fh.tell()
    s.write_batch([(b"b", b"2")])
    s.close()
    with open(path, "r+b") as fh:
        fh.seek(end_first + struct.calcsize("<I") + 1)
        byte = fh.read(1)
        fh.seek(-1, 1)
        fh.write(bytes([byte[0] ^ 0xFF]))
    s2 = FileStore(path)
    assert s2.get(b"a") == b"1"
    assert s2.get(b"b") is None
    s2.close()


def test_open_store_dispatch(tmp_path):
    assert isinstance(open_store("memory"), MemoryStore)
    fs = open_store("file", str(tmp_path / "x.log"))
    assert isinstance(fs, FileStore)
    fs.close()
    with pytest.raises(ValueError):
        open_store("file")
    with pytest.raises(ValueError):
        open_store("lmdb")
