import io
import json
import os
import subprocess
import sys

import numpy as np
import pytest

from chunkpack import cli
from chunkpack import format as fmt


def blpk(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = cli.run([str(a) for a in argv], out, err)
    return code, out.getvalue(), err.getvalue()


@pytest.fixture
def datafile(tmp_path):
    p = tmp_path / "data.dat"
    p.write_bytes(np.arange(300_000, dtype="<i8").tobytes() + b"tail")
    return p


def test_compress_decompress_append_flow(datafile, tmp_path):
    code, _, _ = blpk("compress", datafile)
    assert code == 0
    packed = tmp_path / "data.dat.blp"
    assert packed.exists()
    code, _, _ = blpk("decompress", packed, tmp_path / "data.dcmp")
    assert code == 0
    assert (tmp_path / "data.dcmp").read_bytes() == datafile.read_bytes()


def test_decompress_default_name(datafile, tmp_path):
    blpk("c", datafile)
    original = datafile.read_bytes()
    datafile.unlink()
    assert blpk("d", tmp_path / "data.dat.blp")[0] == 0
    assert datafile.read_bytes() == original


def test_decompress_needs_name_without_extension(datafile, tmp_path):
    blpk("c", datafile, tmp_path / "packed.bin")
    code, _, err = blpk("d", tmp_path / "packed.bin")
    assert code == 1 and ".blp" in err


def test_refuses_overwrite(datafile, tmp_path):
    assert blpk("compress", datafile)[0] == 0
    code, _, err = blpk("compress", datafile)
    assert code == 1 and "--force" in err
    assert blpk("compress", "--force", datafile)[0] == 0
    out = tmp_path / "out"
    out.write_bytes(b"keep")
    assert blpk("decompress", tmp_path / "data.dat.blp", out)[0] == 1
    assert out.read_bytes() == b"keep"


def test_compress_options(datafile, tmp_path):
    target = tmp_path / "x.blp"
    meta = tmp_path / "meta.json"
    meta.write_text('{"source": "test"}')
    code, _, _ = blpk("-n", 2, "compress", "-l", 9, "-t", 4, "-z", "64K", "-k", "sha256",
                      "-m", 3, "--metadata", meta, datafile, target)
    assert code == 0
    code, out, _ = blpk("info", "--json", target)
    doc = json.loads(out)
    assert doc["chunk_size"] == 65536
    assert doc["typesize"] == 4
    assert doc["checksum"] == "sha256"
    assert doc["max_app_chunks"] == 3
    assert doc["metadata"] == '{"source": "test"}'
    assert blpk("d", target, tmp_path / "y")[0] == 0
    assert (tmp_path / "y").read_bytes() == datafile.read_bytes()


def test_info_lists_every_header_field(datafile, tmp_path):
    blpk("compress", datafile)
    code, out, _ = blpk("info", tmp_path / "data.dat.blp")
    assert code == 0
    keys = [line.split(":", 1)[0] for line in out.splitlines()]
    for name in cli.HEADER_FIELDS:
        assert keys.count(name) == 1, name
    assert "ratio" in keys and "metadata" in keys


def test_info_missing_file(tmp_path):
    code, out, err = blpk("info", tmp_path / "missing.blp")
    assert code == 4
    assert out == "" and "missing.blp" in err


def test_format_errors(tmp_path):
    bad = tmp_path / "bad.blp"
    bad.write_bytes(b"XXXX" + bytes(60))
    assert blpk("info", bad)[0] == 2
    assert blpk("d", bad, tmp_path / "o")[0] == 2
    assert not (tmp_path / "o").exists()
    h = bytearray(fmt.encode_header(fmt.FileHeader(chunk_size=8, last_chunk=8, nchunks=1)))
    h[4] = 9
    bad.write_bytes(bytes(h) + bytes(40))
    assert blpk("info", bad)[0] == 2


def test_checksum_mismatch(datafile, tmp_path):
    blpk("compress", "-k", "crc32", datafile)
    packed = tmp_path / "data.dat.blp"
    b = bytearray(packed.read_bytes())
    b[-10] ^= 0xFF
    packed.write_bytes(bytes(b))
    code, _, err = blpk("decompress", packed, tmp_path / "o")
    assert code == 3 and "checksum" in err
    assert not (tmp_path / "o").exists()


def test_append_exit_codes(tmp_path):
    chunk = tmp_path / "chunk"
    chunk.write_bytes(bytes(range(256)) * 256)  # exactly 64 KiB
    packed = tmp_path / "f.blp"
    assert blpk("compress", "-z", "64K", "-m", 1, chunk, packed)[0] == 0
    assert blpk("append", packed, chunk)[0] == 0
    code, _, err = blpk("a", packed, chunk)
    assert code == 5 and "append" in err
    assert blpk("d", packed, tmp_path / "o")[0] == 0
    assert (tmp_path / "o").read_bytes() == chunk.read_bytes() * 2

    assert blpk("compress", "-o", chunk, tmp_path / "n.blp")[0] == 0
    assert blpk("append", tmp_path / "n.blp", chunk)[0] == 5


@pytest.mark.parametrize("argv", [
    [],
    ["frobnicate"],
    ["compress"],
    ["compress", "-l", "12", "x"],
    ["compress", "-z", "lots", "x"],
    ["compress", "-k", "md5", "x"],
    ["-n", "0", "info", "x"],
    ["info", "--bogus", "x"],
])
def test_usage_errors(argv):
    code, _, err = blpk(*argv)
    assert code == 1 and "error" in err


def test_parse_size():
    assert cli.parse_size("1M") == 1048576
    assert cli.parse_size("64k") == 65536
    assert cli.parse_size("2G") == 2**31
    assert cli.parse_size("100") == 100


def test_help_documents_exit_codes():
    text = cli.build_parser().format_help()
    for code in range(6):
        assert f"  {code}  " in text


def test_console_script(datafile, tmp_path):
    exe = [sys.executable, "-m", "chunkpack.cli"]
    env = dict(os.environ)
    r = subprocess.run(exe + ["compress", str(datafile)], env=env, capture_output=True)
    assert r.returncode == 0, r.stderr
    r = subprocess.run(exe + ["decompress", str(datafile) + ".blp", str(tmp_path / "data.dcmp")],
                       env=env, capture_output=True)
    assert r.returncode == 0
    assert (tmp_path / "data.dcmp").read_bytes() == datafile.read_bytes()
    r = subprocess.run(exe + ["info", str(tmp_path / "nope.blp")], capture_output=True)
    assert r.returncode == 4
