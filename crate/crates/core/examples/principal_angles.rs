//! Principal angles between random subspaces, the tangent-ratio shortcut,
//! and how far QR factors move under a small perturbation.

use anpm_lab::linalg::{
    gaussian_frame, principal_angles, qr_perturbation_bounds, qr_unique, spectral_norm,
    tan_theta_via_ratio, QrPerturbation,
};
use anpm_lab::rng::{gaussian_matrix, seeded};

fn main() -> anpm_lab::Result<()> {
    let mut rng = seeded(7);
    let (d, k) = (20, 4);

    let u = gaussian_frame(d, k, &mut rng)?;
    let ucomp = u.complement().expect("d > k");
    let x = gaussian_frame(d, k, &mut rng)?;

    let angles = principal_angles(&u, &x)?;
    println!("angles (rad): {:.4?}", angles.angles);
    println!(
        "cos_k {:.6}  sin_k {:.6}  tan_k {:.6}",
        angles.cos_k, angles.sin_k, angles.tan_k
    );
    println!(
        "tan_k via ||U_-k^T X (U_k^T X)^-1|| = {:.6}",
        tan_theta_via_ratio(&u, &ucomp, &x)?
    );

    let m = gaussian_matrix(10, 3, &mut rng);
    let dm = gaussian_matrix(10, 3, &mut rng);
    let (smin, _) = anpm_lab::linalg::extreme_singular_values(&m);
    let dm = &dm * (0.1 * smin / spectral_norm(&dm));
    let (q0, r0) = qr_unique(&m)?;
    let (q1, r1) = qr_unique(&(&m + &dm))?;
    if let QrPerturbation::Bounds { q, r } = qr_perturbation_bounds(&m, &dm)? {
        println!(
            "||dQ||_F = {:.3e} <= {q:.3e},  ||dR||_F = {:.3e} <= {r:.3e}",
            (q1.as_matrix() - q0.as_matrix()).norm(),
            (r1.as_matrix() - r0.as_matrix()).norm(),
        );
    }
    Ok(())
}
