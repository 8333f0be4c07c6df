"""On-disk ELF facts and live-process comparison primitives.

Parses 64-bit little-endian ELF objects directly (program headers, dynamic
section, jump-slot relocations, PLT sections), simulates the dynamic
linker's search order for dependency closures, and reads target process
memory to compare executable regions and GOT contents against the file.
"""

from __future__ import annotations

import hashlib
import os
import struct
from dataclasses import dataclass, field

from .errors import ElfError, ElfTruncated, NotElf, UnsupportedClass

PAGE = 4096

ET_EXEC = 2
ET_DYN = 3

PT_LOAD = 1
PT_DYNAMIC = 2
PT_INTERP = 3
PT_NOTE = 4
PT_GNU_RELRO = 0x6474E552

PF_X = 1
PF_W = 2
PF_R = 4

DT_NULL = 0
DT_NEEDED = 1
DT_PLTRELSZ = 2
DT_PLTGOT = 3
DT_RELA = 7
DT_RELASZ = 8
DT_STRTAB = 5
DT_SYMTAB = 6
DT_STRSZ = 10
DT_SONAME = 14
DT_RPATH = 15
DT_PLTREL = 20
DT_TEXTREL = 22
DT_JMPREL = 23
DT_BIND_NOW = 24
DT_RUNPATH = 29
DT_FLAGS = 30
DT_FLAGS_1 = 0x6FFFFFFB

DF_TEXTREL = 0x4
DF_BIND_NOW = 0x8
DF_1_NOW = 0x1
DF_1_PIE = 0x08000000

R_X86_64_JUMP_SLOT = 7
R_X86_64_IRELATIVE = 37

NT_GNU_BUILD_ID = 3

PLT_SECTION_NAMES = (b".plt", b".plt.got", b".plt.sec")

CLASS_UNRESOLVED = "unresolved_stub"
CLASS_RESOLVED = "resolved"
CLASS_ANOMALOUS = "anomalous"
CLASS_UNREADABLE = "unreadable"


class MalformedElf(ElfError):
    """A referenced table is internally inconsistent."""


@dataclass
class LoadSegment:
    vaddr: int
    file_offset: int
    file_size: int
    mem_size: int
    flags: int


@dataclass
class JumpSlotReloc:
    symbol_name: str
    slot_vaddr: int
    initial_value: int  # link-time slot content, before any rebasing


@dataclass
class ElfSummary:
    path: str
    elf_type: str  # exec | pie_dyn | shared_object
    machine: int
    elf_class: int
    load_segments: list
    needed: list
    jump_slot_relocs: list
    plt_range: tuple | None  # covering (vaddr, size) envelope
    plt_section_ranges: list  # precise [(vaddr, size), ...]
    relro: bool
    bind_now: bool
    textrel: bool
    build_id: str | None
    interp: str | None
    rpath: list = field(default_factory=list)
    runpath: list = field(default_factory=list)
    irelative_offsets: list = field(default_factory=list)


def _pread(f, size, offset, what):
    f.seek(offset)
    data = f.read(size)
    if len(data) != size:
        raise ElfTruncated(f"{what}: need {size} bytes at offset {offset}, file ends early")
    return data


def _cstr(buf, off):
    end = buf.find(b"\x00", off)
    if end < 0:
        raise MalformedElf("string table entry is not NUL-terminated")
    return buf[off:end].decode("utf-8", "replace")


def parse_elf(path) -> ElfSummary:
    """Parse one on-disk object.  Only ELF64 little-endian is handled."""
    with open(path, "rb") as f:
        ident = f.read(16)
        if len(ident) < 16 or ident[:4] != b"\x7fELF":
            raise NotElf(f"{path}: no ELF identification")
        if ident[4] != 2 or ident[5] != 1:
            raise UnsupportedClass(f"{path}: not a 64-bit little-endian object")
        hdr = _pread(f, 48, 16, "ELF header")
        (e_type, e_machine, _ver, _entry, e_phoff, e_shoff, _flags,
         _ehsize, e_phentsize, e_phnum, e_shentsize, e_shnum, e_shstrndx) = struct.unpack(
            "<HHIQQQIHHHHHH", hdr)
        if e_type not in (ET_EXEC, ET_DYN):
            raise UnsupportedClass(f"{path}: ELF type {e_type} is not an executable or shared object")
        if e_phnum == 0xFFFF:
            raise MalformedElf(f"{path}: extended program header count unsupported")
        if e_phentsize < 56:
            raise MalformedElf(f"{path}: program header entries too small ({e_phentsize})")

        loads = []
        dynamic_range = None
        interp = None
        relro = False
        note_ranges = []
        for i in range(e_phnum):
            raw = _pread(f, 56, e_phoff + i * e_phentsize, "program header table")
            p_type, p_flags, p_offset, p_vaddr, _pa, p_filesz, p_memsz, _align = struct.unpack(
                "<IIQQQQQQ", raw)
            if p_type == PT_LOAD:
                loads.append(LoadSegment(p_vaddr, p_offset, p_filesz, p_memsz, p_flags))
            elif p_type == PT_DYNAMIC:
                dynamic_range = (p_offset, p_filesz)
            elif p_type == PT_INTERP and p_filesz > 0:
                interp = _pread(f, p_filesz, p_offset, "PT_INTERP").rstrip(b"\x00").decode(
                    "utf-8", "replace")
            elif p_type == PT_GNU_RELRO:
                relro = True
            elif p_type == PT_NOTE and p_filesz > 0:
                note_ranges.append((p_offset, p_filesz))

        loads.sort(key=lambda s: s.vaddr)
        prev_end = None
        for seg in loads:
            if prev_end is not None and seg.file_offset < prev_end and seg.file_size > 0:
                raise MalformedElf(f"{path}: PT_LOAD file ranges overlap")
            if seg.file_size > 0:
                prev_end = seg.file_offset + seg.file_size

        def vaddr_to_off(vaddr, what):
            for seg in loads:
                if seg.vaddr <= vaddr < seg.vaddr + seg.file_size:
                    return seg.file_offset + (vaddr - seg.vaddr)
            raise MalformedElf(f"{path}: {what} vaddr 0x{vaddr:x} outside loadable file ranges")

        # dynamic section
        needed_offs = []
        dyn = {}
        flags_dyn = flags1 = 0
        textrel = bind_now = False
        has_soname = False
        rpath_off = runpath_off = None
        if dynamic_range:
            data = _pread(f, dynamic_range[1], dynamic_range[0], "dynamic section")
            for off in range(0, len(data) - 15, 16):
                tag, val = struct.unpack_from("<qQ", data, off)
                if tag == DT_NULL:
                    break
                if tag == DT_NEEDED:
                    needed_offs.append(val)
                elif tag == DT_RPATH:
                    rpath_off = val
                elif tag == DT_RUNPATH:
                    runpath_off = val
                elif tag == DT_FLAGS:
                    flags_dyn = val
                elif tag == DT_FLAGS_1:
                    flags1 = val
                elif tag == DT_TEXTREL:
                    textrel = True
                elif tag == DT_BIND_NOW:
                    bind_now = True
                elif tag == DT_SONAME:
                    has_soname = True
                else:
                    dyn[tag] = val
        if flags_dyn & DF_TEXTREL:
            textrel = True
        if flags_dyn & DF_BIND_NOW or flags1 & DF_1_NOW:
            bind_now = True

        needed = []
        rpath = []
        runpath = []
        if DT_STRTAB in dyn and (needed_offs or rpath_off is not None or runpath_off is not None):
            strsz = dyn.get(DT_STRSZ, 0)
            if strsz == 0:
                raise MalformedElf(f"{path}: dynamic string table has no DT_STRSZ")
            strtab = _pread(f, strsz, vaddr_to_off(dyn[DT_STRTAB], "dynamic string table"),
                            "dynamic string table")
            needed = [_cstr(strtab, off) for off in needed_offs]
            if rpath_off is not None:
                rpath = [p for p in _cstr(strtab, rpath_off).split(":") if p]
            if runpath_off is not None:
                runpath = [p for p in _cstr(strtab, runpath_off).split(":") if p]

        # jump-slot relocations
        jump_slots = []
        irelative = []
        if DT_JMPREL in dyn and dyn.get(DT_PLTRELSZ, 0) > 0:
            if dyn.get(DT_PLTREL, 7) != 7:
                raise MalformedElf(f"{path}: jump-slot relocation table is not RELA")
            if DT_SYMTAB not in dyn or DT_STRTAB not in dyn:
                raise MalformedElf(f"{path}: relocations without dynamic symbol/string tables")
            relsz = dyn[DT_PLTRELSZ]
            rel = _pread(f, relsz, vaddr_to_off(dyn[DT_JMPREL], "jump-slot relocation table"),
                         "jump-slot relocation table")
            strsz = dyn.get(DT_STRSZ, 0)
            strtab = _pread(f, strsz, vaddr_to_off(dyn[DT_STRTAB], "dynamic string table"),
                            "dynamic string table")
            symoff = vaddr_to_off(dyn[DT_SYMTAB], "dynamic symbol table")
            for off in range(0, relsz - 23, 24):
                r_offset, r_info, _addend = struct.unpack_from("<QQq", rel, off)
                r_type = r_info & 0xFFFFFFFF
                if r_type == R_X86_64_IRELATIVE:
                    irelative.append(r_offset)
                    continue
                if r_type != R_X86_64_JUMP_SLOT:
                    continue
                sym_idx = r_info >> 32
                st_name = struct.unpack(
                    "<I", _pread(f, 4, symoff + sym_idx * 24, "dynamic symbol table"))[0]
                name = _cstr(strtab, st_name) if st_name < len(strtab) else ""
                try:
                    initial = struct.unpack(
                        "<Q", _pread(f, 8, vaddr_to_off(r_offset, "jump slot"), "jump slot"))[0]
                except (MalformedElf, ElfTruncated):
                    initial = 0  # slot lives in the zero-filled tail
                jump_slots.append(JumpSlotReloc(name, r_offset, initial))

        # IRELATIVE entries in the main relocation table affect hash comparability
        if DT_RELA in dyn and dyn.get(DT_RELASZ, 0) > 0:
            relsz = dyn[DT_RELASZ]
            try:
                rel = _pread(f, relsz, vaddr_to_off(dyn[DT_RELA], "relocation table"),
                             "relocation table")
            except MalformedElf:
                rel = b""
            for off in range(0, len(rel) - 23, 24):
                r_offset, r_info, _addend = struct.unpack_from("<QQq", rel, off)
                if r_info & 0xFFFFFFFF == R_X86_64_IRELATIVE:
                    irelative.append(r_offset)

        # PLT-flavored sections give the unresolved-stub address window
        plt_ranges = []
        if e_shoff and e_shnum and e_shstrndx < e_shnum:
            if e_shentsize < 64:
                raise MalformedElf(f"{path}: section header entries too small ({e_shentsize})")
            raw = _pread(f, 64, e_shoff + e_shstrndx * e_shentsize, "section header table")
            _, _, _, _, shstr_off, shstr_size, _, _, _, _ = struct.unpack("<IIQQQQIIQQ", raw)
            shstr = _pread(f, shstr_size, shstr_off, "section name table")
            for i in range(e_shnum):
                raw = _pread(f, 64, e_shoff + i * e_shentsize, "section header table")
                sh_name, _type, _flags, sh_addr, _off, sh_size, _, _, _, _ = struct.unpack(
                    "<IIQQQQIIQQ", raw)
                end = shstr.find(b"\x00", sh_name)
                if end < 0 or sh_size == 0:
                    continue
                if shstr[sh_name:end] in PLT_SECTION_NAMES:
                    plt_ranges.append((sh_addr, sh_size))
        plt_ranges.sort()
        plt_range = None
        if plt_ranges:
            lo = plt_ranges[0][0]
            hi = max(addr + size for addr, size in plt_ranges)
            plt_range = (lo, hi - lo)

        # build id from SHT_NOTE-backed PT_NOTE segments
        build_id = None
        for off, size in note_ranges:
            if build_id:
                break
            data = _pread(f, size, off, "note segment")
            pos = 0
            while pos + 12 <= len(data):
                namesz, descsz, n_type = struct.unpack_from("<III", data, pos)
                pos += 12
                name = data[pos:pos + namesz].rstrip(b"\x00")
                pos += (namesz + 3) & ~3
                desc = data[pos:pos + descsz]
                pos += (descsz + 3) & ~3
                if name == b"GNU" and n_type == NT_GNU_BUILD_ID:
                    build_id = desc.hex()
                    break

        # libc carries a PT_INTERP of its own (it is directly runnable), so
        # interp alone cannot separate PIE executables from libraries
        if e_type == ET_EXEC:
            elf_type = "exec"
        elif flags1 & DF_1_PIE:
            elf_type = "pie_dyn"
        elif has_soname:
            elf_type = "shared_object"
        elif interp:
            elf_type = "pie_dyn"
        else:
            elf_type = "shared_object"

        return ElfSummary(
            path=path,
            elf_type=elf_type,
            machine=e_machine,
            elf_class=64,
            load_segments=loads,
            needed=needed,
            jump_slot_relocs=jump_slots,
            plt_range=plt_range,
            plt_section_ranges=plt_ranges,
            relro=relro,
            bind_now=bind_now,
            textrel=textrel,
            build_id=build_id,
            interp=interp,
            rpath=rpath,
            runpath=runpath,
            irelative_offsets=irelative,
        )


# -- dependency resolution ------------------------------------------------

STANDARD_DIRS = (
    "/lib/x86_64-linux-gnu",
    "/usr/lib/x86_64-linux-gnu",
    "/lib64",
    "/usr/lib64",
    "/lib",
    "/usr/lib",
)

LD_CACHE_MAGIC = b"glibc-ld.so.cache"
LD_CACHE_VERSION = b"1.1"


@dataclass
class SearchConfig:
    cache_path: str = "/etc/ld.so.cache"
    standard_dirs: tuple = STANDARD_DIRS
    honor_rpath: bool = True


@dataclass
class ClosureResult:
    by_name: dict  # soname -> canonical path
    paths: set  # canonical paths, interpreter included
    unresolved: list  # sonames with no candidate


def parse_ld_cache(path="/etc/ld.so.cache"):
    """Map sonames to paths from the shared-library cache.

    Handles the current cache layout (magic glibc-ld.so.cache1.1), both
    standalone and embedded after a legacy header.  First matching entry
    per name wins, mirroring lookup order.
    """
    try:
        with open(path, "rb") as f:
            data = f.read()
    except OSError:
        return {}
    base = data.find(LD_CACHE_MAGIC)
    if base < 0 or data[base + 17:base + 20] != LD_CACHE_VERSION:
        return {}
    if base + 48 > len(data):
        return {}
    nlibs, _len_strings = struct.unpack_from("<II", data, base + 20)
    out = {}
    entry_off = base + 48
    for i in range(nlibs):
        off = entry_off + i * 24
        if off + 24 > len(data):
            break
        _flags, key, value = struct.unpack_from("<iII", data, off)
        try:
            name_end = data.index(b"\x00", base + key)
            path_end = data.index(b"\x00", base + value)
        except ValueError:
            continue
        name = data[base + key:name_end].decode("utf-8", "replace")
        lib_path = data[base + value:path_end].decode("utf-8", "replace")
        out.setdefault(name, lib_path)
    return out


def _is_elf64(path):
    try:
        with open(path, "rb") as f:
            head = f.read(6)
    except OSError:
        return False
    return head[:4] == b"\x7fELF" and len(head) == 6 and head[4] == 2 and head[5] == 1


def _substitute_origin(entry, object_path):
    origin = os.path.dirname(os.path.realpath(object_path))
    return entry.replace("${ORIGIN}", origin).replace("$ORIGIN", origin)


def _find_library(name, obj: ElfSummary, exe_rpath, config, cache):
    if "/" in name:
        return name if _is_elf64(name) else None
    if config.honor_rpath:
        # RUNPATH of the requesting object wins; RPATH falls back to the
        # executable's when the object has none (linker inheritance)
        dirs = obj.runpath or obj.rpath or exe_rpath
        for entry in dirs:
            candidate = os.path.join(_substitute_origin(entry, obj.path), name)
            if _is_elf64(candidate):
                return candidate
    if name in cache and _is_elf64(cache[name]):
        return cache[name]
    for d in config.standard_dirs:
        candidate = os.path.join(d, name)
        if _is_elf64(candidate):
            return candidate
    return None


def resolve_dependency_closure(summary: ElfSummary, config: SearchConfig = None) -> ClosureResult:
    """Transitive closure over DT_NEEDED, one canonical path per name."""
    config = config or SearchConfig()
    cache = parse_ld_cache(config.cache_path)
    by_name = {}
    paths = set()
    unresolved = []
    exe_rpath = summary.rpath
    queue = [summary]
    while queue:
        cur = queue.pop(0)
        for name in cur.needed:
            if name in by_name or name in unresolved:
                continue
            found = _find_library(name, cur, exe_rpath, config, cache)
            if found is None:
                unresolved.append(name)
                continue
            real = os.path.realpath(found)
            by_name[name] = real
            if real in paths:
                continue
            paths.add(real)
            try:
                queue.append(parse_elf(real))
            except ElfError:
                pass  # path still counts as a dependency, recursion stops here
    if summary.interp:
        paths.add(os.path.realpath(summary.interp))
    return ClosureResult(by_name=by_name, paths=paths, unresolved=sorted(unresolved))


# -- expected executable content -------------------------------------------


@dataclass
class ExpectedHash:
    file_offset: int  # page-aligned
    length: int  # page-aligned
    digest: str


def _align_down(v):
    return v & ~(PAGE - 1)


def _align_up(v):
    return (v + PAGE - 1) & ~(PAGE - 1)


def _hash_file_range(path, offset, length, algo):
    """Digest file bytes [offset, offset+length), zero-padded past EOF.

    Matches what the kernel presents for the final partial page of a
    file-backed mapping.
    """
    h = hashlib.new(algo)
    with open(path, "rb") as f:
        f.seek(0, os.SEEK_END)
        file_size = f.tell()
        avail = max(0, min(length, file_size - offset))
        f.seek(offset)
        remaining = avail
        while remaining > 0:
            chunk = f.read(min(1 << 20, remaining))
            if not chunk:
                break
            h.update(chunk)
            remaining -= len(chunk)
        pad = length - (avail - remaining)
    zeros = bytes(1 << 20)
    while pad > 0:
        h.update(zeros[: min(pad, len(zeros))])
        pad -= min(pad, len(zeros))
    return h.hexdigest()


def expected_exec_hashes(summary: ElfSummary, algo="sha256"):
    """Disk-derived digests for each executable load segment, page-aligned."""
    out = []
    for seg in summary.load_segments:
        if not seg.flags & PF_X or seg.file_size == 0:
            continue
        start = _align_down(seg.file_offset)
        end = _align_up(seg.file_offset + seg.file_size)
        out.append(ExpectedHash(start, end - start, _hash_file_range(summary.path, start, end - start, algo)))
    return out


# -- live process reads -----------------------------------------------------


class MemReader:
    """Chunked reads of another process's address space."""

    def __init__(self, pid):
        self.pid = pid
        self.fd = os.open(f"/proc/{pid}/mem", os.O_RDONLY)

    def close(self):
        if self.fd is not None:
            os.close(self.fd)
            self.fd = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def read(self, addr, size):
        out = []
        remaining = size
        pos = addr
        while remaining > 0:
            chunk = os.pread(self.fd, min(remaining, 1 << 20), pos)
            if not chunk:
                raise OSError(f"short read at 0x{pos:x}")
            out.append(chunk)
            pos += len(chunk)
            remaining -= len(chunk)
        return b"".join(out)

    def read_u64(self, addr):
        return struct.unpack("<Q", self.read(addr, 8))[0]

    def hash_range(self, addr, size, algo):
        h = hashlib.new(algo)
        pos = addr
        remaining = size
        while remaining > 0:
            chunk = os.pread(self.fd, min(remaining, 1 << 20), pos)
            if not chunk:
                raise OSError(f"short read at 0x{pos:x}")
            h.update(chunk)
            pos += len(chunk)
            remaining -= len(chunk)
        return h.hexdigest()


@dataclass
class ExecRegionHash:
    start: int
    end: int
    path: str
    observed_digest: str | None
    expected_digest: str | None
    comparable: bool
    fault: str | None = None


def _mapping_vaddr_window(summary, mapping):
    """Link-time vaddr range backing a mapping's file window, if any."""
    for seg in summary.load_segments:
        if not seg.flags & PF_X:
            continue
        if _align_down(seg.file_offset) == mapping.file_offset:
            lo = _align_down(seg.vaddr)
            return lo, lo + (mapping.end - mapping.start)
    return None


def _relocs_touch_window(summary, window):
    if window is None:
        return False
    lo, hi = window
    for reloc in summary.jump_slot_relocs:
        if lo <= reloc.slot_vaddr < hi:
            return True
    for off in summary.irelative_offsets:
        if lo <= off < hi:
            return True
    return False


def read_exec_region_hashes(pid, mappings, summaries, algo="sha256", expected_cache=None):
    """Hash every executable mapping of a process from memory.

    `summaries` maps canonical backing paths to ElfSummary (or None when
    unparsable); expected digests are attached for file-backed, read-only
    executable regions whose object has stable on-disk content.
    """
    if expected_cache is None:
        expected_cache = {}
    out = []
    with MemReader(pid) as mem:
        for m in mappings:
            if "x" not in m.perms or m.backing == "special":
                continue
            observed = fault = None
            try:
                observed = mem.hash_range(m.start, m.end - m.start, algo)
            except OSError as exc:
                fault = str(exc)
            expected = None
            comparable = False
            if (
                m.backing == "file"
                and not m.deleted
                and "w" not in m.perms
                and observed is not None
            ):
                real = os.path.realpath(m.path)
                summary = summaries.get(real)
                if summary is not None and not summary.textrel:
                    window = _mapping_vaddr_window(summary, m)
                    if not _relocs_touch_window(summary, window):
                        key = (real, m.file_offset, m.end - m.start, algo)
                        if key not in expected_cache:
                            try:
                                expected_cache[key] = _hash_file_range(
                                    real, m.file_offset, m.end - m.start, algo)
                            except OSError:
                                expected_cache[key] = None
                        expected = expected_cache[key]
                        comparable = expected is not None
            out.append(
                ExecRegionHash(
                    start=m.start,
                    end=m.end,
                    path=m.path,
                    observed_digest=observed,
                    expected_digest=expected,
                    comparable=comparable,
                    fault=fault,
                )
            )
    return out


# -- GOT extraction ----------------------------------------------------------


@dataclass
class GotEntryRecord:
    symbol: str
    slot_vaddr: int
    slot_addr: int
    stored: int | None
    classification: str
    module: str | None
    module_offset: int | None


@dataclass
class GotTableRecord:
    object_path: str
    load_base: int
    entries: list


def encode_got_entry(entry: GotEntryRecord) -> str:
    """Flatten one slot into the bundle's string attribute form.

    Layout: symbol|slot_vaddr|stored|classification|module|module_offset
    with "-" for absent parts.  Node attributes are scalars only, so the
    table rides as a list of these strings.
    """
    return "|".join(
        (
            entry.symbol or "-",
            f"0x{entry.slot_vaddr:x}",
            "-" if entry.stored is None else f"0x{entry.stored:x}",
            entry.classification,
            entry.module or "-",
            "-" if entry.module_offset is None else f"0x{entry.module_offset:x}",
        )
    )


def decode_got_entry(text: str) -> dict:
    """Inverse of encode_got_entry; splits from the right so an exotic
    symbol name containing the separator still decodes."""
    symbol, slot, stored, classification, module, module_offset = text.rsplit("|", 5)
    return {
        "symbol": symbol,
        "slot_vaddr": int(slot, 16),
        "stored": None if stored == "-" else int(stored, 16),
        "classification": classification,
        "module": None if module == "-" else module,
        "module_offset": None if module_offset == "-" else int(module_offset, 16),
    }


def compute_load_base(summary: ElfSummary, mappings, exe_real):
    """Runtime rebase of the object: 0 for fixed executables, else the
    start of its lowest file-offset-zero mapping."""
    if summary.elf_type == "exec":
        return 0
    candidates = [
        m.start
        for m in mappings
        if m.file_offset == 0 and m.backing == "file" and os.path.realpath(m.path) == exe_real
    ]
    if not candidates:
        raise ElfError(f"no offset-zero mapping of {exe_real} to derive the load base")
    return min(candidates)


def _module_bases(mappings):
    bases = {}
    for m in mappings:
        if m.backing != "file":
            continue
        real = os.path.realpath(m.path)
        if m.file_offset == 0:
            bases[real] = min(bases.get(real, m.start), m.start)
    return bases


def extract_got_entries(pid, summary, load_base, mappings, closure_paths=None) -> GotTableRecord:
    """Read each jump slot from process memory and classify it.

    unresolved_stub: still the link-time value or points into the object's
    own PLT window (lazy binding not yet hit).
    resolved: inside an executable mapping of a dependency-closure member
    (the owning object itself never counts; a slot caught pointing at its
    own text is exactly the hook shape worth surfacing).
    anomalous: everything else.
    """
    own_real = os.path.realpath(summary.path)
    rebase = load_base if summary.elf_type != "exec" else 0
    bases = _module_bases(mappings)
    exec_maps = [m for m in mappings if "x" in m.perms]
    entries = []
    with MemReader(pid) as mem:
        for reloc in summary.jump_slot_relocs:
            slot_addr = reloc.slot_vaddr + rebase
            try:
                stored = mem.read_u64(slot_addr)
            except OSError:
                entries.append(
                    GotEntryRecord(reloc.symbol_name, reloc.slot_vaddr, slot_addr,
                                   None, CLASS_UNREADABLE, None, None))
                continue
            classification, module, module_offset = _classify_slot(
                stored, reloc, summary, rebase, exec_maps, bases, own_real, closure_paths)
            entries.append(
                GotEntryRecord(reloc.symbol_name, reloc.slot_vaddr, slot_addr,
                               stored, classification, module, module_offset))
    return GotTableRecord(object_path=own_real, load_base=load_base, entries=entries)


def _classify_slot(stored, reloc, summary, rebase, exec_maps, bases, own_real, closure_paths):
    if stored == reloc.initial_value + rebase:
        return CLASS_UNRESOLVED, own_real, stored - rebase if stored else None
    for lo, size in summary.plt_section_ranges:
        if lo + rebase <= stored < lo + size + rebase:
            return CLASS_UNRESOLVED, own_real, stored - rebase
    for m in exec_maps:
        if not (m.start <= stored < m.end):
            continue
        if m.backing != "file":
            return CLASS_ANOMALOUS, m.path or None, None
        real = os.path.realpath(m.path)
        offset = stored - bases[real] if real in bases else None
        if real != own_real and (closure_paths is None or real in closure_paths):
            return CLASS_RESOLVED, real, offset
        return CLASS_ANOMALOUS, real, offset
    return CLASS_ANOMALOUS, None, None
