"""Write the mesh, velocity field and boundary markers used by the
convection-diffusion demo descriptor (src/femkit/demos/convection_diffusion.json)."""
from pathlib import Path

import numpy as np

from femkit.function import Expression, VectorFunctionSpace, interpolate
from femkit.io import write_mesh_xml, write_meshfunction_xml, write_vector_xml
from femkit.mesh import MeshFunction, unit_square

DEMOS = Path(__file__).resolve().parents[1] / "src" / "femkit" / "demos"


def main(n=32):
    mesh = unit_square(n, n)
    write_mesh_xml(mesh, DEMOS / "convection_diffusion_mesh.xml")

    # rigid rotation about the centre of the square
    W = VectorFunctionSpace(mesh, "CG", 2)
    b = interpolate(Expression(("-(x[1] - 0.5)", "x[0] - 0.5")), W)
    write_vector_xml(b.array, DEMOS / "convection_diffusion_velocity.xml")

    # marker 1 on the left side x = 0, 0 elsewhere
    D = mesh.tdim
    f2v = mesh.connectivity(D - 1, 0).as_array()
    left = np.all(np.abs(mesh.coordinates[f2v, 0]) < 1e-12, axis=1)
    exterior = mesh.connectivity(D - 1, D).sizes() == 1
    markers = MeshFunction(mesh, D - 1, np.where(left & exterior, 1, 0), dtype=np.int64)
    write_meshfunction_xml(markers, DEMOS / "convection_diffusion_subdomains.xml")


if __name__ == "__main__":
    main()
