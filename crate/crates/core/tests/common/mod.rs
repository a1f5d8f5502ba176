//! Reference implementations used as test oracles. Each one is written
//! directly from the physical model with dense linear algebra and no shortcuts,
//! and shares no code with the library beyond plain nalgebra types.
#![allow(dead_code)]

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Vector3};
use resbeam_core::C64;

/// Element positions of a planar array, row-major, centred on `origin`.
pub fn element_positions(
    origin: Vector3<f64>,
    boresight: Vector3<f64>,
    in_plane: Vector3<f64>,
    rows: usize,
    cols: usize,
    spacing: f64,
) -> Vec<Vector3<f64>> {
    let b = boresight.normalize();
    let e1 = (in_plane - b * in_plane.dot(&b)).normalize();
    let e2 = b.cross(&e1);
    let mut out = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let x = (c as f64 - (cols as f64 - 1.0) / 2.0) * spacing;
            let y = (r as f64 - (rows as f64 - 1.0) / 2.0) * spacing;
            out.push(origin + e1 * x + e2 * y);
        }
    }
    out
}

/// `g_max · cos^q θ` in front of the element, zero behind it.
pub fn gain(g_max: f64, q: f64, boresight: &Vector3<f64>, towards: &Vector3<f64>) -> f64 {
    let c = boresight.normalize().dot(&towards.normalize());
    if c <= 0.0 {
        0.0
    } else {
        g_max * c.powf(q)
    }
}

/// Friis element-to-element coupling with propagation phase.
#[allow(clippy::too_many_arguments)]
pub fn friis_entry(
    tx: Vector3<f64>,
    tx_boresight: Vector3<f64>,
    rx: Vector3<f64>,
    rx_boresight: Vector3<f64>,
    wavelength: f64,
    g_max: f64,
    q: f64,
    phi0: f64,
) -> C64 {
    let d = rx - tx;
    let l = d.norm();
    let gt = gain(g_max, q, &tx_boresight, &d);
    let gr = gain(g_max, q, &rx_boresight, &(-d));
    let amp = wavelength / (4.0 * PI * l) * (gt * gr).sqrt();
    let phase = -(2.0 * PI / wavelength * l - phi0);
    C64::new(amp * phase.cos(), amp * phase.sin())
}

/// Dense channel, rows = receive elements, columns = transmit elements.
#[allow(clippy::too_many_arguments)]
pub fn channel(
    tx: &[Vector3<f64>],
    tx_boresight: Vector3<f64>,
    rx: &[Vector3<f64>],
    rx_boresight: Vector3<f64>,
    wavelength: f64,
    g_max: f64,
    q: f64,
) -> DMatrix<C64> {
    DMatrix::from_fn(rx.len(), tx.len(), |n, m| {
        friis_entry(tx[m], tx_boresight, rx[n], rx_boresight, wavelength, g_max, q, 0.0)
    })
}

/// Dominant right singular vector of `c`, unit norm.
pub fn dominant_right_singular(c: &DMatrix<C64>) -> (f64, DVector<C64>) {
    let svd = c.clone().svd(false, true);
    let vt = svd.v_t.expect("v_t requested");
    let (idx, s) = svd
        .singular_values
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, &s)| (i, s))
        .unwrap();
    let v = DVector::from_iterator(vt.ncols(), vt.row(idx).iter().map(|z| z.conj()));
    (s, v)
}

/// `|⟨a, b⟩| / (‖a‖‖b‖)`.
pub fn alignment(a: &DVector<C64>, b: &DVector<C64>) -> f64 {
    a.dotc(b).norm() / (a.norm() * b.norm())
}

/// Plane-wave response `exp(−j k r_m·u)` for local element coordinates.
pub fn steering(local: &[(f64, f64)], wavelength: f64, theta: f64, phi: f64) -> DVector<C64> {
    let k = 2.0 * PI / wavelength;
    let (ux, uy) = (theta.sin() * phi.cos(), theta.sin() * phi.sin());
    DVector::from_iterator(
        local.len(),
        local.iter().map(|&(x, y)| {
            let p = -k * (x * ux + y * uy);
            C64::new(p.cos(), p.sin())
        }),
    )
}

/// Local `(x, y)` coordinates of a `rows × cols` grid.
pub fn local_grid(rows: usize, cols: usize, spacing: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            out.push((
                (c as f64 - (cols as f64 - 1.0) / 2.0) * spacing,
                (r as f64 - (rows as f64 - 1.0) / 2.0) * spacing,
            ));
        }
    }
    out
}

/// Orthonormal basis of the complement of `span(a)` for a single steering
/// vector, by Gram-Schmidt against the identity.
pub fn complement_basis(a: &DVector<C64>) -> DMatrix<C64> {
    let m = a.len();
    let mut basis: Vec<DVector<C64>> = vec![a.normalize()];
    for i in 0..m {
        let mut v = DVector::<C64>::zeros(m);
        v[i] = C64::new(1.0, 0.0);
        for b in &basis {
            let proj = b.dotc(&v);
            v -= b * proj;
        }
        let n = v.norm();
        if n > 1e-8 {
            basis.push(v / C64::new(n, 0.0));
        }
        if basis.len() == m {
            break;
        }
    }
    DMatrix::from_columns(&basis[1..])
}

/// `1 / ‖U_Nᴴ a‖²` with an explicit noise basis.
pub fn pseudospectrum(noise: &DMatrix<C64>, a: &DVector<C64>) -> f64 {
    1.0 / (noise.adjoint() * a).norm_squared()
}

/// Unit vector of the direction `(θ, φ)` in a frame with axes `e1, e2, e3`.
pub fn unit_vector(theta: f64, phi: f64) -> Vector3<f64> {
    Vector3::new(theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos())
}

/// Point closest to both rays `p_i + t_i u_i` (midpoint of the common perpendicular).
pub fn ray_intersection(p1: Vector3<f64>, u1: Vector3<f64>, p2: Vector3<f64>, u2: Vector3<f64>) -> Vector3<f64> {
    let w = p1 - p2;
    let (a, b, c) = (u1.dot(&u1), u1.dot(&u2), u2.dot(&u2));
    let (d, e) = (u1.dot(&w), u2.dot(&w));
    let den = a * c - b * b;
    let t1 = (b * e - c * d) / den;
    let t2 = (a * e - b * d) / den;
    ((p1 + u1 * t1) + (p2 + u2 * t2)) * 0.5
}

/// Root mean square of `‖x_i − truth‖`.
pub fn rmse(points: &[Vector3<f64>], truth: &Vector3<f64>) -> f64 {
    (points.iter().map(|p| (p - truth).norm_squared()).sum::<f64>() / points.len() as f64).sqrt()
}
