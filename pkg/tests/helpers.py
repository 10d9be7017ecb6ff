"""Shared fixture geometry for the end-to-end tests.

Scale note: the repulsive term activates between non-edge vertex pairs closer
than 0.1 m. At the default loss weights that term overwhelms gravity on any
mesh fine enough to have active pairs (each pair on a curved surface
contributes an outward force ~ lambda_r / radius, hundreds of pairs per
vertex), so end-to-end fixtures use a large body and coarse garments whose
nearest non-edge spacing stays above 0.1 m. Unit tests cover the repulsive
term directly on small point sets.
"""

import numpy as np

from layerdrape.energy import MaterialParams
from layerdrape.mesh import TriangleMesh
from layerdrape.primitives import tube, uv_sphere
from layerdrape.rig import RiggedBody, ToyBodyConfig, generate_toy_body
from layerdrape.solver import Garment

BODY_SCALE = 4.0


def big_body_config() -> ToyBodyConfig:
    """Toy humanoid scaled so a ~1.5k-vertex garment keeps >0.1 m spacing."""
    s = BODY_SCALE
    return ToyBodyConfig(
        height_pelvis=0.95 * s,
        torso_length=0.47 * s,
        head_radius=0.085 * s,
        torso_radius=0.105 * s,
        pelvis_radius=0.135 * s,
        arm_length=0.52 * s,
        arm_radius=0.042 * s,
        leg_length=0.80 * s,
        leg_radius=0.065 * s,
        shoulder_halfwidth=0.20 * s,
        hip_halfwidth=0.14 * s,
        grid_spacing=0.024 * s,
        smooth_k=0.03 * s,
    )


def big_body() -> RiggedBody:
    return generate_toy_body(big_body_config())


def skirt_mesh(center_x: float = -0.35):
    """Coarse tube skirt, ~1.5k vertices, hanging on the big body's left leg.

    The tube encloses the left leg only; at the default center its far wall
    starts a couple of centimeters inside the right leg's inner flank, so the
    body collision term has real push-out work to do. Contact stays on a body
    part outside the tube on purpose: the hanging cloth contracts radially
    under its own weight (vertical tension couples into the hoop through the
    membrane), and for an enclosing tube that contraction squeezes onto the
    legs and keeps a permanent contact pressure the cubic hinge can only
    balance, never release. With the contacted leg outside, contraction and
    push-out agree and the solve ends contact-free.
    """
    rings = 27
    spacing = 0.082
    height = rings * spacing
    top_y = 2.85
    return tube(
        radius=0.60,
        height=height,
        segments=52,
        rings=rings,
        center=(center_x, top_y - 0.5 * height, 0.0),
    )


def prepared_skirt(body: RiggedBody, held: bool) -> Garment:
    return Garment.prepare("skirt", skirt_mesh(), body, held=held)


# Tube cloth for the layer stacks. Zero first Lame parameter: a hanging tube
# with transverse contraction squeezes its own radius under vertical sag,
# leaving the hoop pre-compressed, and any outward nudge from a neighboring
# layer then RELIEVES strain instead of adding it, inverting the layer strain
# profile. With zero contraction the hanging tube keeps its rest radius, so
# every radial push, inward or outward, adds strain quadratically from zero.
# The wider garment shell keeps the cross-layer terms engaged across the
# coarse facets of these tubes (a neighbor's tangent plane sits more than a
# millimeter below the chord midpoints).
TUBE_MATERIAL = MaterialParams(
    lame_lambda=0.0,
    epsilon_garment=0.020,
)


def column_body_config() -> ToyBodyConfig:
    """Variant toy body whose upper torso is a near-perfect cylinder.

    The default smoothing radius lets neighboring capsules inflate the torso
    surface by tens of millimeters (the two collinear torso capsules alone
    add smooth_k*log(2) at their seam), which turns the chest into a cone.
    Layer stacks need a straight wall behind the innermost garment so that
    the body contact caps its inward travel uniformly across rows; a tilted
    wall lets the inner tube cave into a cone whose slanted contact planes
    hand the outer layers' weight down the stack. Shrinking smooth_k and
    fattening the torso gives a chest band (y in [4.90, 5.20] at this scale)
    whose radial extent is constant to a fraction of a millimeter.
    """
    s = BODY_SCALE
    return ToyBodyConfig(
        height_pelvis=0.95 * s,
        torso_length=0.47 * s,
        head_radius=0.085 * s,
        torso_radius=0.129 * s,
        pelvis_radius=0.135 * s,
        arm_length=0.52 * s,
        arm_radius=0.042 * s,
        leg_length=0.80 * s,
        leg_radius=0.065 * s,
        shoulder_halfwidth=0.20 * s,
        hip_halfwidth=0.14 * s,
        grid_spacing=0.024 * s,
        smooth_k=0.0075 * s,
    )


def column_body() -> RiggedBody:
    return generate_toy_body(column_body_config())


def layer_tube(radius: float, phase: float = 0.0):
    """Coarse open tube hanging around the column body's chest band.

    Rest radius clears the torso by a little more than the body shell but
    stays within the pair matching radius, so the stack terms see
    body-anchored vertex pairs everywhere while the body collision term
    stays silent until the stack squeezes the tube inward. Ten vertex rows
    on purpose: the held set is the top height decile, and at ten rows that
    is exactly the full top ring, so the pin pattern is rotationally
    symmetric and the hanging tube cannot tilt. (A partial pinned arc tilts
    the tube, contact normals pick up vertical components, and outer layers
    start resting weight on inner ones, which drains their own stretch.)
    phase rotates the vertex rings about the axis so stacked copies
    interleave instead of aligning vertex columns.

    29 segments keeps the non-edge quad diagonal at 0.118, far enough above
    the 0.1 pair radius that contact ripple in a stack solve cannot pull
    diagonals into the repulsive set (each entering pair is a -log cliff
    that would make stratified states look worse than entangled ones).
    Same-column pairs two and three rings apart sit inside the radius by
    construction, but those vary smoothly and appear identically in single
    and stacked solves.
    """
    segments = 29
    rings = 9
    spacing = 0.0306
    height = rings * spacing
    mesh = tube(
        radius=radius,
        height=height,
        segments=segments,
        rings=rings,
        center=(0.0, 5.0427, 0.0),
    )
    if phase:
        c, s = np.cos(phase), np.sin(phase)
        v = mesh.vertices.copy()
        x, z = v[:, 0].copy(), v[:, 2].copy()
        v[:, 0] = c * x - s * z
        v[:, 2] = s * x + c * z
        mesh = TriangleMesh(v, mesh.faces)
    return mesh


# One garment family, innermost first: a stack of M uses the first M members,
# so deeper stacks literally contain the shallow ones and a single-drape solve
# per member serves every stack size. Rest radii start just above the body
# shell and step outward by 12 mm, less than the garment shell, so stacked
# layers engage and push each other apart; the innermost one backs onto the
# body collision wall, which caps its inward travel and leaves the outermost
# layer with the largest strain gain (absent an external wall the pair force
# splits the travel evenly, and with it the relative strain gains, since hoop
# stiffness and the hanging strain baseline scale with the same modulus). 12
# mm is deliberate: at 7 mm the two-layer stack engages so hard that both
# layers ride the body wall together and the inner one picks up marginally
# more strain than the outer. The scrambled set builds the first two layers
# radius-swapped, so the independently draped tubes start genuinely
# interpenetrating and the stack solve has to pull them through each other.
TUBE_FAMILY = ((0.524, 0.0), (0.536, 0.046), (0.548, 0.092))
_SCRAMBLED_RADII = {
    2: (0.531, 0.524),
    3: (0.531, 0.524, 0.538),
}


def tube_garments(body: RiggedBody, specs) -> list[Garment]:
    """Prepared tubes from (radius, phase) pairs, stack order as given.

    Keeping radius and phase explicit lets a test stack the exact same two
    meshes in both orders (the declared order is the only difference)."""
    garments = []
    for k, (radius, phase) in enumerate(specs):
        mesh = layer_tube(radius=radius, phase=phase)
        garments.append(
            Garment.prepare(
                f"tube{k + 1}", mesh, body, material=TUBE_MATERIAL, held=True
            )
        )
    return garments


def layer_stack(body: RiggedBody, count: int, scrambled: bool = False) -> list[Garment]:
    """count nested hanging tubes, innermost first, phase-staggered."""
    if scrambled:
        specs = [(r, 0.046 * k) for k, r in enumerate(_SCRAMBLED_RADII[count])]
    else:
        specs = list(TUBE_FAMILY[:count])
    return tube_garments(body, specs)


def sphere_body(radius: float = 0.5) -> RiggedBody:
    """Single-joint rig around a sphere; the cheapest body that hosts a garment."""
    mesh = uv_sphere(radius, rings=12, segments=16)
    n = mesh.num_vertices
    return RiggedBody(
        mesh=mesh,
        joint_names=["root"],
        joint_parents=np.array([-1]),
        joint_rest=np.zeros((1, 3)),
        weights=np.ones((n, 1)),
        shape_dirs=np.zeros((0, n, 3)),
        joint_shape_dirs=np.zeros((0, 1, 3)),
        landmarks={"collarbone_y": 0.8 * radius},
    )


def small_tube() -> TriangleMesh:
    """Tube coarse enough that no non-edge pair falls inside the 0.1 m radius."""
    return tube(radius=0.7, height=0.36, segments=12, rings=3)


def fold_pair(theta: float) -> TriangleMesh:
    """Two coherently wound triangles folded by theta about their shared edge.

    The shared edge runs along +x; at theta = 0 the pair is flat in the y = 0
    plane, and the fold angle equals theta exactly for theta in (-pi, pi]."""
    verts = np.array(
        [
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [0.5, 0.0, 1.0],
            [0.5, np.sin(theta), -np.cos(theta)],
        ]
    )
    faces = np.array([[0, 1, 2], [1, 0, 3]])
    return TriangleMesh(verts, faces)
