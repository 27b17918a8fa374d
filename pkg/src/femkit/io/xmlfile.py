"""Mesh and MeshFunction XML files.

Layout::

    <dolfin>
      <mesh celltype="triangle" dim="2">
        <vertices size="N"><vertex index="0" x="..." y="..."/>...</vertices>
        <cells size="M"><triangle index="0" v0="..." v1="..." v2="..."/>...</cells>
      </mesh>
      <meshfunction dim="1" size="K"><entity index="0" value="..."/>...</meshfunction>
    </dolfin>

Coordinates are written with 17 significant digits so a write/read cycle
reproduces them bit for bit. The parser keeps line numbers for diagnostics.
"""
from __future__ import annotations

import xml.parsers.expat
from dataclasses import dataclass, field
from xml.sax.saxutils import quoteattr

import numpy as np

from femkit import reference
from femkit.errors import IoError, ParseError, SchemaMismatch
from femkit.mesh import Mesh, MeshFunction

AXES = ("x", "y", "z")


@dataclass
class _Node:
    tag: str
    attrs: dict
    line: int
    children: list = field(default_factory=list)

    def find(self, tag):
        return [c for c in self.children if c.tag == tag]

    def attr(self, name, conv=str):
        if name not in self.attrs:
            raise ParseError(f"<{self.tag}> lacks attribute {name!r}", self.line)
        try:
            return conv(self.attrs[name])
        except ValueError:
            raise ParseError(f"bad value {self.attrs[name]!r} for {name!r}", self.line) from None


def _parse_tree(text: bytes) -> _Node:
    parser = xml.parsers.expat.ParserCreate()
    root = _Node("#document", {}, 0)
    stack = [root]

    def start(tag, attrs):
        node = _Node(tag, attrs, parser.CurrentLineNumber)
        stack[-1].children.append(node)
        stack.append(node)

    def end(tag):
        stack.pop()

    parser.StartElementHandler = start
    parser.EndElementHandler = end
    try:
        parser.Parse(text, True)
    except xml.parsers.expat.ExpatError as exc:
        raise ParseError(f"malformed XML: {xml.parsers.expat.errors.messages[exc.code]}", exc.lineno) from None
    if len(root.children) != 1 or root.children[0].tag != "dolfin":
        raise SchemaMismatch("root element must be <dolfin>")
    return root.children[0]


def _read(path) -> _Node:
    try:
        with open(path, "rb") as fh:
            return _parse_tree(fh.read())
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc


def _indexed(nodes, size, what, line):
    seen = np.zeros(size, dtype=bool)
    out = [None] * size
    for n in nodes:
        i = n.attr("index", int)
        if not 0 <= i < size:
            raise ParseError(f"{what} index {i} outside 0..{size - 1}", n.line)
        if seen[i]:
            raise ParseError(f"duplicate {what} index {i}", n.line)
        seen[i] = True
        out[i] = n
    if not seen.all():
        missing = int(np.nonzero(~seen)[0][0])
        raise ParseError(f"missing {what} index {missing}", line)
    return out


def parse_mesh(doc: _Node) -> Mesh:
    meshes = doc.find("mesh")
    if len(meshes) != 1:
        raise SchemaMismatch("expected exactly one <mesh> element")
    m = meshes[0]
    celltype = m.attr("celltype")
    if celltype not in reference.CELL_TDIM:
        raise SchemaMismatch(f"unsupported celltype {celltype!r}")
    tdim = reference.CELL_TDIM[celltype]
    gdim = m.attr("dim", int)
    if not tdim <= gdim <= 3:
        raise SchemaMismatch(f"dim={gdim} incompatible with celltype {celltype}")
    vblock, cblock = m.find("vertices"), m.find("cells")
    if len(vblock) != 1 or len(cblock) != 1:
        raise SchemaMismatch("<mesh> needs one <vertices> and one <cells> block")
    vb, cb = vblock[0], cblock[0]
    nv, nc = vb.attr("size", int), cb.attr("size", int)
    verts = _indexed(vb.find("vertex"), nv, "vertex", vb.line)
    coords = np.array([[v.attr(a, float) for a in AXES[:gdim]] for v in verts]).reshape(nv, gdim)
    if any(c.tag != celltype for c in cb.children):
        bad = next(c for c in cb.children if c.tag != celltype)
        raise SchemaMismatch(f"cell element <{bad.tag}> in a {celltype} mesh (line {bad.line})")
    cells_n = _indexed(cb.children, nc, "cell", cb.line)
    cells = np.array([[c.attr(f"v{k}", int) for k in range(tdim + 1)] for c in cells_n],
                     dtype=np.int64).reshape(nc, tdim + 1)
    if cells.size and (cells.min() < 0 or cells.max() >= nv):
        raise ParseError("cell references a vertex outside the vertex list", cb.line)
    return Mesh(coords, cells, tdim, gdim)


def read_mesh_xml(path) -> Mesh:
    return parse_mesh(_read(path))


def _fmt(v):
    return format(float(v), ".17g")


def mesh_xml(mesh: Mesh) -> str:
    cell = mesh.cell_name
    lines = ['<?xml version="1.0" encoding="UTF-8"?>', "<dolfin>",
             f'  <mesh celltype="{cell}" dim="{mesh.gdim}">',
             f'    <vertices size="{mesh.num_vertices()}">']
    for i, x in enumerate(mesh.coordinates):
        xs = " ".join(f'{a}="{_fmt(c)}"' for a, c in zip(AXES, x))
        lines.append(f'      <vertex index="{i}" {xs}/>')
    lines.append("    </vertices>")
    lines.append(f'    <cells size="{mesh.num_cells()}">')
    for j, c in enumerate(mesh.cells):
        vs = " ".join(f'v{k}="{int(v)}"' for k, v in enumerate(c))
        lines.append(f'      <{cell} index="{j}" {vs}/>')
    lines.append("    </cells>")
    lines.append("  </mesh>")
    return "\n".join(lines)


def write_mesh_xml(mesh: Mesh, path, mesh_functions=()):
    text = mesh_xml(mesh)
    body = [text] + [_meshfunction_block(f) for f in mesh_functions] + ["</dolfin>", ""]
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(body))
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def _meshfunction_block(f: MeshFunction, name=None):
    kind = "bool" if f.values.dtype == bool else ("int" if np.issubdtype(f.values.dtype, np.integer)
                                                  else "float")
    name_attr = f" name={quoteattr(name)}" if name else ""
    lines = [f'  <meshfunction dim="{f.dim}" size="{len(f)}" type="{kind}"{name_attr}>']
    for i, v in enumerate(f.values):
        val = int(v) if kind != "float" else _fmt(v)
        lines.append(f'    <entity index="{i}" value="{val}"/>')
    lines.append("  </meshfunction>")
    return "\n".join(lines)


def write_meshfunction_xml(f: MeshFunction, path):
    text = "\n".join(['<?xml version="1.0" encoding="UTF-8"?>', "<dolfin>",
                      _meshfunction_block(f), "</dolfin>", ""])
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def read_meshfunction_xml(path, mesh: Mesh) -> MeshFunction:
    """The (first) <meshfunction> block of a file, attached to ``mesh``."""
    doc = _read(path)
    blocks = doc.find("meshfunction")
    if not blocks:
        raise SchemaMismatch("no <meshfunction> element")
    b = blocks[0]
    dim, size = b.attr("dim", int), b.attr("size", int)
    if not 0 <= dim <= mesh.tdim or size != mesh.num_entities(dim):
        raise SchemaMismatch(f"meshfunction of size {size} on dimension {dim} does not fit the mesh")
    kind = b.attrs.get("type", "int")
    conv = {"bool": lambda s: bool(int(s)), "int": int, "float": float}.get(kind)
    if conv is None:
        raise SchemaMismatch(f"unknown meshfunction type {kind!r}")
    entities = _indexed(b.find("entity"), size, "entity", b.line)
    dtype = {"bool": bool, "int": np.int64, "float": float}[kind]
    return MeshFunction(mesh, dim, [e.attr("value", conv) for e in entities], dtype=dtype)


def write_vector_xml(values, path):
    """Coefficient vector as ``<vector size="N"><entry index="i" value="v"/></vector>``."""
    values = np.asarray(values, dtype=float).reshape(-1)
    lines = ['<?xml version="1.0" encoding="UTF-8"?>', "<dolfin>", f'  <vector size="{len(values)}">']
    lines += [f'    <entry index="{i}" value="{_fmt(v)}"/>' for i, v in enumerate(values)]
    lines += ["  </vector>", "</dolfin>", ""]
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines))
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def read_vector_xml(path) -> np.ndarray:
    doc = _read(path)
    blocks = doc.find("vector")
    if len(blocks) != 1:
        raise SchemaMismatch("expected exactly one <vector> element")
    b = blocks[0]
    entries = _indexed(b.find("entry"), b.attr("size", int), "entry", b.line)
    return np.array([e.attr("value", float) for e in entries])


__all__ = ["mesh_xml", "read_mesh_xml", "read_meshfunction_xml", "read_vector_xml",
           "write_mesh_xml", "write_meshfunction_xml", "write_vector_xml"]
