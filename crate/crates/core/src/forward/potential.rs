//! Virtual and internal potentials and the electrode intensity.

use crate::error::{Error, Result};
use crate::mesh_fem::{
    assemble_scalar_diffusion, BoundaryTag, ConductivityMap, ScalarField, SolverKind,
    SparseSystem, VectorField,
};

/// Assembles `−∇·(σ∇u) = 0` with `u = 0` on Γ1 and `u = top` on Γ2.
fn electrode_system(sigma: &ConductivityMap, top: f64) -> Result<SparseSystem> {
    let mesh = sigma.mesh();
    let mut sys = assemble_scalar_diffusion(mesh, sigma.values())?;
    sys.set_dirichlet_where(&mesh.nodes_on(BoundaryTag::Gamma1), |_| 0.0);
    sys.set_dirichlet_where(&mesh.nodes_on(BoundaryTag::Gamma2), |_| top);
    Ok(sys)
}

/// Potential `U` with `U = 0` on Γ1, `U = 1` on Γ2 and insulated Γ0.
pub fn solve_virtual_potential(sigma: &ConductivityMap) -> Result<ScalarField> {
    solve_virtual_potential_with(sigma, SolverKind::default())
}

pub fn solve_virtual_potential_with(sigma: &ConductivityMap, kind: SolverKind) -> Result<ScalarField> {
    let u = electrode_system(sigma, 1.0)?.solve_with(kind)?;
    // discrete maximum principle; fails only on badly shaped meshes
    let (lo, hi) = u
        .values()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if lo < -1e-8 || hi > 1.0 + 1e-8 {
        return Err(Error::numerical(
            format!("virtual potential leaves [0, 1]: range [{lo:e}, {}]", hi),
            (hi - 1.0).max(-lo),
        ));
    }
    Ok(u)
}

/// `σ∇U` per triangle.
pub fn virtual_current(sigma: &ConductivityMap, potential: &ScalarField) -> VectorField {
    let g = potential.gradient();
    let values = g
        .values()
        .iter()
        .zip(sigma.values())
        .map(|(v, s)| [s * v[0], s * v[1]])
        .collect();
    VectorField::new(sigma.mesh().clone(), values).expect("same mesh")
}

fn check_source(sigma: &ConductivityMap, source: &VectorField) -> Result<()> {
    let mesh = sigma.mesh();
    crate::mesh_fem::same_mesh(mesh, source.mesh())?;
    let g1 = mesh.nodes_on(BoundaryTag::Gamma1);
    let g2 = mesh.nodes_on(BoundaryTag::Gamma2);
    for (t, j) in source.values().iter().enumerate() {
        if j[0] == 0.0 && j[1] == 0.0 {
            continue;
        }
        if mesh.triangle(t).iter().any(|&i| g1[i] || g2[i]) {
            return Err(Error::validation(format!(
                "source current is nonzero on triangle {t}, which touches an electrode"
            )));
        }
    }
    Ok(())
}

/// Potential `u` generated by the source `j_S`:
/// `∇·(σ∇u + j_S) = 0`, `u = 0` on Γ1 ∪ Γ2, `(σ∇u + j_S)·ν = 0` on Γ0.
///
/// The source must vanish on triangles touching the electrodes.
pub fn solve_internal_potential(sigma: &ConductivityMap, source: &VectorField) -> Result<ScalarField> {
    Ok(internal_system(sigma, source)?.1)
}

/// Same problem without the electrode-support check. The reciprocity
/// identity behind [`electrode_intensity`] does not hold for such sources.
pub fn solve_internal_potential_unchecked(
    sigma: &ConductivityMap,
    source: &VectorField,
) -> Result<ScalarField> {
    crate::mesh_fem::same_mesh(sigma.mesh(), source.mesh())?;
    assemble_internal(sigma, source)?.solve()
}

fn assemble_internal(sigma: &ConductivityMap, source: &VectorField) -> Result<SparseSystem> {
    let mut sys = electrode_system(sigma, 0.0)?;
    let load: Vec<[f64; 2]> = source.values().iter().map(|j| [-j[0], -j[1]]).collect();
    sys.add_flux_load(&load);
    Ok(sys)
}

fn internal_system(sigma: &ConductivityMap, source: &VectorField) -> Result<(SparseSystem, ScalarField)> {
    check_source(sigma, source)?;
    let sys = assemble_internal(sigma, source)?;
    let u = sys.solve()?;
    Ok((sys, u))
}

/// Current through Γ2 produced by `j_S`, summed from the nodal reactions of
/// the internal problem. On the discrete level this equals `∫ j_S·∇U_h`.
pub fn electrode_intensity(sigma: &ConductivityMap, source: &VectorField) -> Result<f64> {
    let (sys, u) = internal_system(sigma, source)?;
    let g2 = sigma.mesh().nodes_on(BoundaryTag::Gamma2);
    let r = sys.reactions(&u);
    Ok(r.iter().zip(&g2).filter(|(_, &on)| on).map(|(v, _)| v).sum())
}

/// Reactions summed separately over Γ1 and Γ2; they cancel by conservation.
pub fn electrode_fluxes(sigma: &ConductivityMap, source: &VectorField) -> Result<(f64, f64)> {
    let (sys, u) = internal_system(sigma, source)?;
    let mesh = sigma.mesh();
    let r = sys.reactions(&u);
    let sum = |tag| -> f64 {
        r.iter().zip(mesh.nodes_on(tag)).filter(|(_, on)| *on).map(|(v, _)| v).sum()
    };
    Ok((sum(BoundaryTag::Gamma1), sum(BoundaryTag::Gamma2)))
}
