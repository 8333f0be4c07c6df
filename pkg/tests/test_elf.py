"""ELF inspector tests, cross-checked against binutils and live processes."""

import hashlib
import os
import re
import shutil
import subprocess

import pytest

from uspect.elfinspect import (
    CLASS_RESOLVED,
    CLASS_UNRESOLVED,
    ElfSummary,
    PF_W,
    PF_X,
    compute_load_base,
    expected_exec_hashes,
    extract_got_entries,
    parse_elf,
    parse_ld_cache,
    read_exec_region_hashes,
    resolve_dependency_closure,
)
from uspect.errors import ElfTruncated, NotElf, UnsupportedClass

from probes import Probe, read_maps

TRUE_BIN = os.path.realpath(shutil.which("true") or "/usr/bin/true")

needs_readelf = pytest.mark.skipif(shutil.which("readelf") is None, reason="readelf missing")


def readelf(*args):
    return subprocess.run(
        ["readelf", *args], check=True, capture_output=True, text=True
    ).stdout


# -- static parsing vs binutils -------------------------------------------


@needs_readelf
def test_load_segments_match_readelf():
    summary = parse_elf(TRUE_BIN)
    want = []
    for line in readelf("-lW", TRUE_BIN).splitlines():
        m = re.match(
            r"\s+LOAD\s+(0x[0-9a-f]+)\s+(0x[0-9a-f]+)\s+0x[0-9a-f]+\s+(0x[0-9a-f]+)\s+(0x[0-9a-f]+)\s+([RWE ]+)\s+0x",
            line,
        )
        if not m:
            continue
        flags = 0
        for ch, bit in (("R", 4), ("W", 2), ("E", 1)):
            if ch in m.group(5):
                flags |= bit
        want.append((int(m.group(2), 16), int(m.group(1), 16), int(m.group(3), 16),
                     int(m.group(4), 16), flags))
    got = [(s.vaddr, s.file_offset, s.file_size, s.mem_size, s.flags) for s in summary.load_segments]
    assert got == want
    assert want, "oracle parsed no LOAD rows"


@needs_readelf
def test_needed_and_flags_match_readelf():
    summary = parse_elf(TRUE_BIN)
    dyn = readelf("-d", TRUE_BIN)
    want_needed = re.findall(r"\(NEEDED\)\s+Shared library: \[(.+?)\]", dyn)
    assert summary.needed == want_needed
    assert summary.relro == ("GNU_RELRO" in readelf("-lW", TRUE_BIN))
    now_flagged = bool(re.search(r"\(BIND_NOW\)|FLAGS_1.*\bNOW\b|\(FLAGS\).*\bBIND_NOW\b", dyn))
    assert summary.bind_now == now_flagged


@needs_readelf
def test_jump_slots_match_readelf():
    summary = parse_elf(TRUE_BIN)
    text = readelf("-r", TRUE_BIN)
    want = set()
    for line in text.splitlines():
        if "R_X86_64_JUMP_SLO" not in line:
            continue
        fields = line.split()
        name = fields[4].split("@")[0] if len(fields) > 4 else ""
        want.add((int(fields[0], 16), name))
    got = {(r.slot_vaddr, r.symbol_name) for r in summary.jump_slot_relocs}
    assert got == want


@needs_readelf
def test_build_id_matches_readelf():
    summary = parse_elf(TRUE_BIN)
    m = re.search(r"Build ID:\s*([0-9a-f]+)", readelf("-n", TRUE_BIN))
    if m is None:
        pytest.skip("no build id on this binary")
    assert summary.build_id == m.group(1)


def test_jump_slot_addresses_live_in_writable_or_relro_file_ranges():
    summary = parse_elf(TRUE_BIN)
    for reloc in summary.jump_slot_relocs:
        seg = next(
            s for s in summary.load_segments
            if s.vaddr <= reloc.slot_vaddr < s.vaddr + s.mem_size
        )
        assert seg.flags & PF_W or summary.relro


def test_not_elf_and_truncated_and_wrong_class(tmp_path):
    with pytest.raises(NotElf):
        parse_elf("/etc/hostname")
    stub = tmp_path / "stub.bin"
    with open(TRUE_BIN, "rb") as f:
        stub.write_bytes(f.read(100))
    with pytest.raises(ElfTruncated):
        parse_elf(str(stub))
    elf32 = tmp_path / "elf32.bin"
    elf32.write_bytes(b"\x7fELF\x01\x01" + bytes(58))
    with pytest.raises(UnsupportedClass):
        parse_elf(str(elf32))


def test_static_binary_has_no_dynamic_facts(cc, tmp_path):
    src = tmp_path / "tiny.c"
    src.write_text(
        "void _start(void){"
        '__asm__ volatile("mov $60,%eax; xor %edi,%edi; syscall");'
        "}\n"
    )
    out = tmp_path / "tiny_static"
    subprocess.run(
        [cc, str(src), "-static", "-nostdlib", "-o", str(out)],
        check=True, capture_output=True,
    )
    summary = parse_elf(str(out))
    assert summary.needed == []
    assert summary.jump_slot_relocs == []
    assert resolve_dependency_closure(summary).paths == set()


def test_elf_type_detection(raw_probe_bin, lazy_probe_bin):
    assert parse_elf(raw_probe_bin).elf_type == "exec"
    assert parse_elf(lazy_probe_bin).elf_type == "pie_dyn"
    libc = resolve_dependency_closure(parse_elf(lazy_probe_bin)).by_name.get("libc.so.6")
    assert libc and parse_elf(libc).elf_type == "shared_object"


# -- shared-library cache and closure --------------------------------------


def test_ld_cache_agrees_with_ldconfig():
    if shutil.which("ldconfig") is None:
        pytest.skip("ldconfig missing")
    cache = parse_ld_cache()
    if not cache:
        pytest.skip("no parseable ld.so cache")
    listing = subprocess.run(
        ["ldconfig", "-p"], check=True, capture_output=True, text=True
    ).stdout
    checked = 0
    for line in listing.splitlines():
        m = re.match(r"\s+(\S+)\s+\(.*\)\s+=>\s+(\S+)$", line)
        if not m:
            continue
        name, path = m.group(1), m.group(2)
        if name in cache and checked < 50:
            assert os.path.realpath(cache[name]) == os.path.realpath(path), name
            checked += 1
    assert checked > 10


def test_closure_of_probe_is_exactly_its_live_mapped_objects(lazy_probe_bin):
    summary = parse_elf(lazy_probe_bin)
    closure = resolve_dependency_closure(summary)
    assert closure.unresolved == []
    assert "libc.so.6" in closure.by_name
    with Probe(lazy_probe_bin) as probe:
        live = {
            os.path.realpath(m.path)
            for m in read_maps(probe.pid)
            if m.backing == "file" and os.path.realpath(m.path) != os.path.realpath(lazy_probe_bin)
        }
    assert closure.paths == live


def test_closure_reports_bogus_needed_name(tmp_path, cc):
    # a library whose dependency cannot exist anywhere on the search path
    src = tmp_path / "withdep.c"
    src.write_text("int f(void){return 1;}\n")
    lib = tmp_path / "libwithdep.so"
    subprocess.run(
        [cc, "-shared", "-fPIC", str(src), "-o", str(lib), "-Wl,--no-as-needed",
         "-Wl,-soname,libwithdep.so"],
        check=True, capture_output=True,
    )
    summary = parse_elf(str(lib))
    summary.needed.append("libdoesnotexist-xyzzy.so.9")
    closure = resolve_dependency_closure(summary)
    assert closure.unresolved == ["libdoesnotexist-xyzzy.so.9"]


def test_rpath_resolution_prefers_object_dir(tmp_path, cc):
    libsrc = tmp_path / "dep.c"
    libsrc.write_text("int dep(void){return 7;}\n")
    lib = tmp_path / "libdep.so"
    subprocess.run([cc, "-shared", "-fPIC", str(libsrc), "-o", str(lib)],
                   check=True, capture_output=True)
    mainsrc = tmp_path / "m.c"
    mainsrc.write_text("int dep(void); int main(void){return dep();}\n")
    exe = tmp_path / "m"
    subprocess.run(
        [cc, str(mainsrc), "-o", str(exe), f"-L{tmp_path}", "-ldep",
         "-Wl,-rpath,$ORIGIN", "-Wl,--disable-new-dtags"],
        check=True, capture_output=True,
    )
    summary = parse_elf(str(exe))
    closure = resolve_dependency_closure(summary)
    assert closure.by_name.get("libdep.so") == os.path.realpath(str(lib))


# -- expected hashes ---------------------------------------------------------


def test_expected_exec_hash_matches_external_tool():
    summary = parse_elf(TRUE_BIN)
    expected = expected_exec_hashes(summary)
    assert expected, "no executable segment found"
    size = os.path.getsize(TRUE_BIN)
    for entry in expected:
        if entry.file_offset + entry.length > size:
            continue  # padding case exercised separately
        dd = subprocess.run(
            ["dd", f"if={TRUE_BIN}", "bs=4096",
             f"skip={entry.file_offset // 4096}", f"count={entry.length // 4096}"],
            check=True, capture_output=True,
        ).stdout
        assert hashlib.sha256(dd).hexdigest() == entry.digest


def test_expected_exec_hash_zero_pads_past_eof(tmp_path):
    # when the aligned window runs past EOF the digest covers zero fill,
    # matching what the kernel maps
    payload = b"\x7fELFxxxx" * 100
    p = tmp_path / "blob.bin"
    p.write_bytes(payload)
    summary = parse_elf(TRUE_BIN)
    exec_seg = next(s for s in summary.load_segments if s.flags & PF_X)
    from uspect.elfinspect import _hash_file_range

    digest = _hash_file_range(str(p), 0, 4096, "sha256")
    assert digest == hashlib.sha256(payload + bytes(4096 - len(payload))).hexdigest()
    assert exec_seg.file_size > 0


def test_expected_hashes_skip_zero_filesz_segments():
    summary = parse_elf(TRUE_BIN)
    summary.load_segments = [s for s in summary.load_segments if s.flags & PF_X]
    summary.load_segments[0].file_size = 0
    assert expected_exec_hashes(summary) == []


def test_identical_content_gives_identical_digests(tmp_path):
    copy = tmp_path / "true_copy"
    shutil.copy(TRUE_BIN, copy)
    a = expected_exec_hashes(parse_elf(TRUE_BIN))
    b = expected_exec_hashes(parse_elf(str(copy)))
    assert [(e.file_offset, e.length, e.digest) for e in a] == [
        (e.file_offset, e.length, e.digest) for e in b
    ]


# -- live process comparisons ------------------------------------------------


def summaries_for(mappings):
    out = {}
    for m in mappings:
        if m.backing != "file":
            continue
        real = os.path.realpath(m.path)
        if real in out:
            continue
        try:
            out[real] = parse_elf(real)
        except Exception:
            out[real] = None
    return out


def test_fresh_process_memory_matches_disk(lazy_probe_bin):
    with Probe(lazy_probe_bin) as probe:
        mappings = read_maps(probe.pid)
        hashes = read_exec_region_hashes(probe.pid, mappings, summaries_for(mappings))
    comparable = [h for h in hashes if h.comparable]
    assert len(comparable) >= 2  # at least the probe text and libc text
    for h in comparable:
        assert h.observed_digest == h.expected_digest, h.path


def test_memory_poke_flips_exactly_one_region(lazy_probe_bin):
    with Probe(lazy_probe_bin) as probe:
        mappings = read_maps(probe.pid)
        summaries = summaries_for(mappings)
        exe_real = os.path.realpath(lazy_probe_bin)
        text = next(
            m for m in mappings
            if m.backing == "file" and "x" in m.perms and os.path.realpath(m.path) == exe_real
        )
        # poke one byte through /proc/<pid>/mem (write access forces CoW)
        with open(f"/proc/{probe.pid}/mem", "r+b") as mem:
            mem.seek(text.start)
            byte = mem.read(1)
            mem.seek(text.start)
            mem.write(bytes([byte[0] ^ 0xFF]))
        hashes = read_exec_region_hashes(probe.pid, mappings, summaries)
    mismatched = [h for h in hashes if h.comparable and h.observed_digest != h.expected_digest]
    assert len(mismatched) == 1
    assert mismatched[0].start == text.start


def test_got_lazy_slot_resolves_into_libc(lazy_probe_bin):
    with Probe(lazy_probe_bin) as probe:
        mappings = read_maps(probe.pid)
        summary = parse_elf(lazy_probe_bin)
        exe_real = os.path.realpath(lazy_probe_bin)
        base = compute_load_base(summary, mappings, exe_real)
        closure = resolve_dependency_closure(summary).paths
        before = extract_got_entries(probe.pid, summary, base, mappings, closure)
        getpid_before = next(e for e in before.entries if e.symbol == "getpid")
        assert getpid_before.classification == CLASS_UNRESOLVED

        probe.trigger()
        after = extract_got_entries(probe.pid, summary, base, mappings, closure)
        getpid_after = next(e for e in after.entries if e.symbol == "getpid")
        assert getpid_after.classification == CLASS_RESOLVED
        libc = next(
            m for m in mappings
            if "x" in m.perms and m.backing == "file" and "libc" in os.path.basename(m.path)
        )
        assert getpid_after.module == os.path.realpath(libc.path)
        assert libc.start <= getpid_after.stored < libc.end


def test_raw_probe_all_slots_unresolved_before_any_libc_call(raw_probe_bin):
    summary = parse_elf(raw_probe_bin)
    assert summary.elf_type == "exec"
    assert any(r.symbol_name == "getpid" for r in summary.jump_slot_relocs)
    with Probe(raw_probe_bin) as probe:
        mappings = read_maps(probe.pid)
        base = compute_load_base(summary, mappings, os.path.realpath(raw_probe_bin))
        assert base == 0
        closure = resolve_dependency_closure(summary).paths
        table = extract_got_entries(probe.pid, summary, base, mappings, closure)
        assert table.entries
        assert all(e.classification == CLASS_UNRESOLVED for e in table.entries)
        probe.trigger()
        table2 = extract_got_entries(probe.pid, summary, base, mappings, closure)
        getpid_entry = next(e for e in table2.entries if e.symbol == "getpid")
        assert getpid_entry.classification == CLASS_RESOLVED
        assert getpid_entry.module and "libc" in os.path.basename(getpid_entry.module)


def test_load_base_matches_lowest_offset_zero_mapping(lazy_probe_bin):
    with Probe(lazy_probe_bin) as probe:
        mappings = read_maps(probe.pid)
        exe_real = os.path.realpath(lazy_probe_bin)
        base = compute_load_base(parse_elf(lazy_probe_bin), mappings, exe_real)
        exe_maps = [m for m in mappings if os.path.realpath(m.path) == exe_real]
        assert base == min(m.start for m in exe_maps if m.file_offset == 0)
