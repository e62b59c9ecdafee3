"""Lexical checks over emitted Verilog.

No Verilog simulator is assumed anywhere in the test flow, so emission is
verified three ways: structural lint (module balance, every instantiated
module defined, port connection arity), numeric parse-back of ROM case
tables against the netlist contents, and byte determinism. This module
implements the first two with regular expressions over a comment-stripped
source view; it is a checker for our own generator's idioms, not a
general Verilog frontend.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field


class VerilogError(ValueError):
    pass


_COMMENT = re.compile(r"//[^\n]*|/\*.*?\*/", re.S)
_MODULE = re.compile(
    r"\bmodule\s+(\w+)\s*(?:\#\s*\(.*?\))?\s*(?:\((.*?)\))?\s*;", re.S)
_ENDMODULE = re.compile(r"\bendmodule\b")
_PORT_DECL = re.compile(
    r"\b(input|output|inout)\s+(?:reg\s+|wire\s+)?(signed\s+)?"
    r"(\[[^\]]+\]\s*)?(\w+)")
_INSTANCE = re.compile(
    r"\b(\w+)\s+(\w+)\s*\(\s*(\.\w+\s*\([^()]*\)\s*,?\s*)+\)\s*;", re.S)
_NAMED_CONN = re.compile(r"\.(\w+)\s*\(")
_WIDTH = re.compile(r"\[\s*(\d+)\s*:\s*(\d+)\s*\]")
_KEYWORDS = {"module", "endmodule", "input", "output", "inout", "wire",
             "reg", "assign", "always", "if", "else", "case", "endcase",
             "begin", "end", "function", "endfunction", "task", "endtask",
             "initial", "integer", "localparam", "parameter", "signed",
             "posedge", "negedge", "default", "repeat", "while", "for"}


def strip_comments(text: str) -> str:
    return _COMMENT.sub(" ", text)


@dataclass
class ModuleInfo:
    name: str
    ports: list[str] = field(default_factory=list)
    port_widths: dict = field(default_factory=dict)   # name -> bit count
    instances: list[tuple[str, str, list[str]]] = field(default_factory=list)
    # (module type, instance name, connected port names)


def parse_modules(text: str) -> dict[str, ModuleInfo]:
    """All modules in one source string, with their port lists and the
    instantiations their bodies make."""
    src = strip_comments(text)
    mods: dict[str, ModuleInfo] = {}
    opens = [(m.start(), m) for m in _MODULE.finditer(src)]
    ends = [m.start() for m in _ENDMODULE.finditer(src)]
    if len(opens) != len(ends):
        raise VerilogError(
            f"{len(opens)} module headers but {len(ends)} endmodule")
    for (start, m), end in zip(opens, ends):
        if end < start:
            raise VerilogError("endmodule before module header")
        name, portlist = m.group(1), m.group(2) or ""
        info = ModuleInfo(name)
        body = src[m.end():end]
        for pd in _PORT_DECL.finditer(portlist):
            pname = pd.group(4)
            info.ports.append(pname)
            wm = _WIDTH.search(pd.group(3) or "")
            info.port_widths[pname] = (
                abs(int(wm.group(1)) - int(wm.group(2))) + 1 if wm else 1)
        for im in _INSTANCE.finditer(body):
            mtype, iname = im.group(1), im.group(2)
            if mtype in _KEYWORDS or iname in _KEYWORDS:
                continue
            conns = _NAMED_CONN.findall(im.group(0))
            info.instances.append((mtype, iname, conns))
        mods[name] = info
    return mods


def lint_project(files: dict[str, str]) -> list[str]:
    """Cross-file diagnostics for an emitted project; empty means clean."""
    diags: list[str] = []
    mods: dict[str, ModuleInfo] = {}
    for fname in sorted(files):
        try:
            parsed = parse_modules(files[fname])
        except VerilogError as e:
            diags.append(f"{fname}: {e}")
            continue
        for name, info in parsed.items():
            if name in mods:
                diags.append(f"{fname}: module {name} defined twice")
            mods[name] = info
    for info in mods.values():
        for mtype, iname, conns in info.instances:
            if mtype not in mods:
                diags.append(f"{info.name}: instantiates undefined module "
                             f"{mtype} as {iname}")
                continue
            want = set(mods[mtype].ports)
            got = set(conns)
            if got - want:
                diags.append(f"{info.name}.{iname}: connects unknown ports "
                             f"{sorted(got - want)} of {mtype}")
            if want - got:
                diags.append(f"{info.name}.{iname}: leaves ports "
                             f"{sorted(want - got)} of {mtype} unconnected")
            if len(conns) != len(set(conns)):
                diags.append(f"{info.name}.{iname}: duplicate connection")
    return diags


def instance_census(files: dict[str, str]) -> dict[str, int]:
    """How many times each module type is instantiated across the project."""
    census: dict[str, int] = {}
    for text in files.values():
        for info in parse_modules(text).values():
            for mtype, _, _ in info.instances:
                census[mtype] = census.get(mtype, 0) + 1
    return census


# ---------------------------------------------------------------------------
# ROM parse-back.

_CASE_ARM = re.compile(
    r"(\d+)\s*'d(\d+)\s*:\s*(\w+)\s*=\s*(-?)(\d+)\s*'s?h([0-9a-fA-F_]+)\s*;")


def rom_tables(text: str) -> dict[str, dict[int, int]]:
    """Recover {assigned name: {address: signed value}} from inline case
    ROMs. Hex literals are decoded as two's complement at their declared
    width, which is how the generator writes table entries."""
    tables: dict[str, dict[int, int]] = {}
    for m in _CASE_ARM.finditer(strip_comments(text)):
        addr = int(m.group(2))
        name = m.group(3)
        width = int(m.group(5))
        raw = int(m.group(6).replace("_", ""), 16)
        if raw >= 1 << width:
            raise VerilogError(
                f"{name}[{addr}]: literal wider than {width} bits")
        if raw >= 1 << (width - 1):
            raw -= 1 << width
        if m.group(4):
            raw = -raw
        tables.setdefault(name, {})[addr] = raw
    return tables


def port_width(files: dict[str, str], module: str, port: str) -> int:
    for text in files.values():
        mods = parse_modules(text)
        if module in mods:
            try:
                return mods[module].port_widths[port]
            except KeyError:
                raise VerilogError(f"{module} has no port {port}")
    raise VerilogError(f"module {module} not found")
