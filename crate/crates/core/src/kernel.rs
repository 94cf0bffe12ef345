//! Free-space Helmholtz kernel, its derivatives and voxel-integrated forms.

use std::f64::consts::PI;

use crate::geometry::{CMat3, CVec3, Vec3, C64, I};
use crate::{Error, Result};

/// Integral of `1/(4 pi |z|)` over the unit cube centred at the origin.
pub const CUBE_SELF_INTEGRAL: f64 = 0.18940053870923704;

/// Outgoing free kernel `exp(ik|x-y|) / (4 pi |x-y|)`.
pub fn free_kernel(x: &Vec3, y: &Vec3, k: f64) -> Result<C64> {
    let r = (x - y).norm();
    if r == 0.0 {
        return Err(Error::SingularEvaluation { x: *x, y: *y });
    }
    Ok(g_of_r(r, k))
}

#[inline]
pub(crate) fn g_of_r(r: f64, k: f64) -> C64 {
    let (s, c) = (k * r).sin_cos();
    C64::new(c, s) / (4.0 * PI * r)
}

/// Gradient of the free kernel with respect to its second argument.
pub fn free_kernel_grad_y(x: &Vec3, y: &Vec3, k: f64) -> Result<CVec3> {
    Ok(-free_kernel_grad_x(x, y, k)?)
}

/// Gradient of the free kernel with respect to its first argument.
pub fn free_kernel_grad_x(x: &Vec3, y: &Vec3, k: f64) -> Result<CVec3> {
    let d = x - y;
    let r = d.norm();
    if r == 0.0 {
        return Err(Error::SingularEvaluation { x: *x, y: *y });
    }
    let g = g_of_r(r, k);
    let gp = g * (I * k - 1.0 / r) / r;
    Ok(CVec3::new(gp * d.x, gp * d.y, gp * d.z))
}

/// Mixed second derivative `d^2 g / dx_a dy_b`.
pub fn free_kernel_mixed_hessian(x: &Vec3, y: &Vec3, k: f64) -> Result<CMat3> {
    let d = x - y;
    let r = d.norm();
    if r == 0.0 {
        return Err(Error::SingularEvaluation { x: *x, y: *y });
    }
    let g = g_of_r(r, k);
    let a = I * k - 1.0 / r;
    let g1 = g * a;
    let g2 = g * (a * a + 1.0 / (r * r));
    let u = d / r;
    let mut h = CMat3::zeros();
    for p in 0..3 {
        for q in 0..3 {
            let uu = u[p] * u[q];
            let delta = if p == q { 1.0 } else { 0.0 };
            // d/dy = -d/dx for a difference kernel
            h[(p, q)] = -(g2 * uu + g1 / r * (delta - uu));
        }
    }
    Ok(h)
}

/// Antiderivative of `1/|u|` with mixed third derivative equal to the integrand.
fn box_antiderivative(x: f64, y: f64, z: f64) -> f64 {
    let r = (x * x + y * y + z * z).sqrt();
    if r == 0.0 {
        return 0.0;
    }
    yz_log(y * z, x, y, z, r) + yz_log(z * x, y, z, x, r) + yz_log(x * y, z, x, y, r)
        - half_sq_atan(x, y, z, r)
        - half_sq_atan(y, z, x, r)
        - half_sq_atan(z, x, y, r)
}

/// `coef * ln(a + R)` evaluated without cancellation for negative `a`.
fn yz_log(coef: f64, a: f64, b: f64, c: f64, r: f64) -> f64 {
    if coef == 0.0 {
        return 0.0;
    }
    let l = if a >= 0.0 {
        (a + r).ln()
    } else {
        ((b * b + c * c) / (r - a)).ln()
    };
    coef * l
}

fn half_sq_atan(a: f64, b: f64, c: f64, r: f64) -> f64 {
    if a == 0.0 {
        return 0.0;
    }
    0.5 * a * a * (b * c / (a * r)).atan()
}

/// Derivative of the antiderivative with respect to its first argument.
fn box_antiderivative_dx(x: f64, y: f64, z: f64) -> f64 {
    let r = (x * x + y * y + z * z).sqrt();
    if r == 0.0 {
        return 0.0;
    }
    let t = if x == 0.0 { 0.0 } else { x * (y * z / (x * r)).atan() };
    yz_log(z, y, z, x, r) + yz_log(y, z, x, y, r) - t
}

/// `integral over the cube of side h centred at the origin of dz/|x - z|`.
pub fn cube_potential(x: &Vec3, h: f64) -> f64 {
    let half = 0.5 * h;
    let mut total = 0.0;
    for cx in 0..2 {
        for cy in 0..2 {
            for cz in 0..2 {
                let ux = if cx == 1 { half - x.x } else { -half - x.x };
                let uy = if cy == 1 { half - x.y } else { -half - x.y };
                let uz = if cz == 1 { half - x.z } else { -half - x.z };
                let sign = if (cx + cy + cz) % 2 == 1 { -1.0 } else { 1.0 };
                total += sign * box_antiderivative(ux, uy, uz);
            }
        }
    }
    // Corner signs are arranged so that the upper corner carries -1; flip.
    -total
}

/// Gradient of [`cube_potential`] with respect to `x`.
pub fn cube_potential_grad(x: &Vec3, h: f64) -> Vec3 {
    let half = 0.5 * h;
    let mut grad = Vec3::zeros();
    for cx in 0..2 {
        for cy in 0..2 {
            for cz in 0..2 {
                let u = [
                    if cx == 1 { half - x.x } else { -half - x.x },
                    if cy == 1 { half - x.y } else { -half - x.y },
                    if cz == 1 { half - x.z } else { -half - x.z },
                ];
                let sign = if (cx + cy + cz) % 2 == 1 { -1.0 } else { 1.0 };
                // du/dx = -1 on every axis
                grad.x += sign * box_antiderivative_dx(u[0], u[1], u[2]);
                grad.y += sign * box_antiderivative_dx(u[1], u[2], u[0]);
                grad.z += sign * box_antiderivative_dx(u[2], u[0], u[1]);
            }
        }
    }
    grad
}

/// `(exp(ikr) - 1) / (4 pi r)` and its radial derivative, regular at r = 0.
fn smooth_part(r: f64, k: f64) -> (C64, C64) {
    let kr = k * r;
    if kr < 1e-3 {
        let f = C64::new(-k * kr / 2.0 + k * kr * kr * kr / 24.0, k - k * kr * kr / 6.0);
        let df = C64::new(-k * k / 2.0 + k * k * kr * kr / 8.0, -k * k * kr / 3.0);
        (f / (4.0 * PI), df / (4.0 * PI))
    } else {
        let e = C64::new(kr.cos(), kr.sin());
        let f = (e - 1.0) / r;
        let df = (I * k * e * r - (e - 1.0)) / (r * r);
        (f / (4.0 * PI), df / (4.0 * PI))
    }
}

/// Nystrom weight of the voxel with centre `c` and side `h` seen from `x`.
///
/// Away from the voxel this is the midpoint value `h^3 g(x, c)`. For `x` inside
/// the voxel the static part is integrated exactly and the smooth remainder by
/// the midpoint rule; at the centre this equals the matrix diagonal.
pub fn voxel_weight(x: &Vec3, c: &Vec3, h: f64, k: f64) -> C64 {
    let d = x - c;
    let h3 = h * h * h;
    if !inside_voxel(&d, h) {
        return g_of_r(d.norm(), k) * h3;
    }
    if d == Vec3::zeros() {
        return self_weight(h, k);
    }
    let (f, _) = smooth_part(d.norm(), k);
    C64::from(cube_potential(&d, h) / (4.0 * PI)) + f * h3
}

/// Gradient of [`voxel_weight`] with respect to `x`.
pub fn voxel_weight_grad(x: &Vec3, c: &Vec3, h: f64, k: f64) -> CVec3 {
    let d = x - c;
    let h3 = h * h * h;
    let r = d.norm();
    if !inside_voxel(&d, h) {
        let g = g_of_r(r, k);
        let gp = g * (I * k - 1.0 / r) / r * h3;
        return CVec3::new(gp * d.x, gp * d.y, gp * d.z);
    }
    let gs = cube_potential_grad(&d, h) / (4.0 * PI);
    let smooth = if r == 0.0 {
        CVec3::zeros()
    } else {
        let (_, df) = smooth_part(r, k);
        let s = df * h3 / r;
        CVec3::new(s * d.x, s * d.y, s * d.z)
    };
    CVec3::new(
        smooth.x + gs.x,
        smooth.y + gs.y,
        smooth.z + gs.z,
    )
}

/// Diagonal of the Nystrom matrix: the voxel integral of `g` about its centre.
pub fn self_weight(h: f64, k: f64) -> C64 {
    C64::new(CUBE_SELF_INTEGRAL * h * h, k * h * h * h / (4.0 * PI))
}

#[inline]
fn inside_voxel(d: &Vec3, h: f64) -> bool {
    let half = 0.5 * h;
    d.x.abs() <= half && d.y.abs() <= half && d.z.abs() <= half
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx_eq::rel;

    mod approx_eq {
        pub fn rel(a: f64, b: f64) -> f64 {
            (a - b).abs() / b.abs().max(1e-300)
        }
    }

    /// Tensor-product Gauss-Legendre integral of `1/|x - z|` over the cube.
    fn brute_cube(x: &Vec3, h: f64, n: usize, split: usize) -> f64 {
        let (gx, gw) = crate::quadrature::gauss_legendre(n);
        let sub = h / split as f64;
        let mut total = 0.0;
        for a in 0..split {
            for b in 0..split {
                for c in 0..split {
                    let lo = Vec3::new(
                        -0.5 * h + a as f64 * sub,
                        -0.5 * h + b as f64 * sub,
                        -0.5 * h + c as f64 * sub,
                    );
                    for i in 0..n {
                        for j in 0..n {
                            for l in 0..n {
                                let z = lo
                                    + Vec3::new(
                                        (gx[i] + 1.0) * 0.5 * sub,
                                        (gx[j] + 1.0) * 0.5 * sub,
                                        (gx[l] + 1.0) * 0.5 * sub,
                                    );
                                let w = gw[i] * gw[j] * gw[l] * (0.5 * sub).powi(3);
                                total += w / (x - z).norm();
                            }
                        }
                    }
                }
            }
        }
        total
    }

    #[test]
    fn unit_distance_static_kernel() {
        let v = free_kernel(&Vec3::new(1.0, 0.0, 0.0), &Vec3::zeros(), 0.0).unwrap();
        assert!((v.re - 1.0 / (4.0 * PI)).abs() < 1e-15 && v.im == 0.0);
    }

    #[test]
    fn half_wavelength_kernel_is_negative_real() {
        let v = free_kernel(&Vec3::new(0.0, PI, 0.0), &Vec3::zeros(), 1.0).unwrap();
        assert!((v.re + 1.0 / (4.0 * PI * PI)).abs() < 1e-15);
        assert!(v.im.abs() < 1e-16);
    }

    #[test]
    fn coincident_points_are_rejected() {
        let x = Vec3::new(0.1, 0.2, 0.3);
        assert!(matches!(
            free_kernel(&x, &x, 1.0),
            Err(Error::SingularEvaluation { .. })
        ));
    }

    #[test]
    fn static_gradient_at_unit_distance() {
        let x = Vec3::zeros();
        let y = Vec3::new(0.6, 0.0, 0.8);
        let grad = free_kernel_grad_y(&x, &y, 0.0).unwrap();
        for i in 0..3 {
            assert!((grad[i].re + (y - x)[i] / (4.0 * PI)).abs() < 1e-15);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let x = Vec3::new(0.3, -0.2, 0.5);
        let y = Vec3::new(-0.4, 0.9, 1.3);
        let k = 2.3;
        let r = (x - y).norm();
        let step = 1e-5 * r;
        let grad = free_kernel_grad_y(&x, &y, k).unwrap();
        for i in 0..3 {
            let mut e = Vec3::zeros();
            e[i] = step;
            let fd = (free_kernel(&x, &(y + e), k).unwrap() - free_kernel(&x, &(y - e), k).unwrap())
                / (2.0 * step);
            assert!((fd - grad[i]).norm() / grad.norm() < 1e-6);
        }
    }

    #[test]
    fn mixed_hessian_matches_finite_differences() {
        let x = Vec3::new(0.3, -0.2, 0.5);
        let y = Vec3::new(-0.4, 0.9, 1.3);
        let k = 1.7;
        let h = free_kernel_mixed_hessian(&x, &y, k).unwrap();
        let step = 1e-5;
        for a in 0..3 {
            let mut e = Vec3::zeros();
            e[a] = step;
            let gp = free_kernel_grad_y(&(x + e), &y, k).unwrap();
            let gm = free_kernel_grad_y(&(x - e), &y, k).unwrap();
            for b in 0..3 {
                let fd = (gp[b] - gm[b]) / (2.0 * step);
                assert!((fd - h[(a, b)]).norm() < 1e-6 * h.norm(), "{a}{b}");
            }
        }
    }

    #[test]
    fn cube_self_integral_closed_form() {
        // 3 ln((sqrt3 + 1)/(sqrt3 - 1)) - pi/2 for the unit cube
        let s3 = 3f64.sqrt();
        let exact = 3.0 * ((s3 + 1.0) / (s3 - 1.0)).ln() - PI / 2.0;
        assert!(rel(cube_potential(&Vec3::zeros(), 1.0), exact) < 1e-14);
        assert!(rel(exact / (4.0 * PI), CUBE_SELF_INTEGRAL) < 1e-15);
    }

    #[test]
    fn cube_potential_matches_brute_force() {
        // Points well outside, on a face, near a corner and inside off-centre.
        let pts = [
            Vec3::new(2.0, 0.3, -0.4),
            Vec3::new(0.9, 0.9, 0.9),
            Vec3::new(0.5, 0.1, 0.2),
            Vec3::new(-0.5, -0.5, 0.45),
            Vec3::new(0.2, -0.1, 0.3),
        ];
        for x in &pts {
            let exact = cube_potential(x, 1.0);
            let brute = brute_cube(x, 1.0, 10, 8);
            assert!(rel(exact, brute) < 2e-5, "{x:?}: {exact} vs {brute}");
        }
    }

    #[test]
    fn cube_potential_scales_quadratically() {
        let x = Vec3::new(0.1, 0.2, -0.3);
        let a = cube_potential(&x, 1.0);
        let b = cube_potential(&(x * 0.25), 0.25);
        assert!(rel(b, a * 0.0625) < 1e-13);
    }

    #[test]
    fn cube_potential_gradient_matches_finite_differences() {
        let pts = [
            Vec3::new(0.2, -0.1, 0.3),
            Vec3::new(1.5, 0.4, -0.2),
            Vec3::new(-0.45, 0.05, 0.0),
        ];
        for x in &pts {
            let g = cube_potential_grad(x, 1.0);
            for i in 0..3 {
                let mut e = Vec3::zeros();
                e[i] = 1e-6;
                let fd = (cube_potential(&(x + e), 1.0) - cube_potential(&(x - e), 1.0)) / 2e-6;
                assert!((fd - g[i]).abs() < 1e-7 * g.norm().max(1.0), "{x:?} axis {i}");
            }
        }
    }

    #[test]
    fn voxel_weight_matches_brute_force_voxel_integral() {
        let c = Vec3::new(0.3, -0.2, 0.1);
        let h = 0.1;
        let k = 1.3;
        let (gx, gw) = crate::quadrature::gauss_legendre(8);
        let split = 6;
        let sub = h / split as f64;
        for x in [c, c + Vec3::new(0.02, -0.03, 0.01), c + Vec3::new(0.049, 0.0, 0.0)] {
            let mut brute = C64::new(0.0, 0.0);
            for a in 0..split {
                for b in 0..split {
                    for e in 0..split {
                        let lo = c - Vec3::new(0.5 * h, 0.5 * h, 0.5 * h)
                            + Vec3::new(a as f64 * sub, b as f64 * sub, e as f64 * sub);
                        for i in 0..8 {
                            for j in 0..8 {
                                for l in 0..8 {
                                    let z = lo
                                        + Vec3::new(gx[i] + 1.0, gx[j] + 1.0, gx[l] + 1.0) * (0.5 * sub);
                                    let w = gw[i] * gw[j] * gw[l] * (0.5 * sub).powi(3);
                                    let r = (x - z).norm();
                                    brute += (C64::new(0.0, k * r).exp() - 1.0) / (4.0 * PI * r) * w;
                                }
                            }
                        }
                    }
                }
            }
            // The static part has its own closed-form check.
            brute += cube_potential(&(x - c), h) / (4.0 * PI);
            let w = voxel_weight(&x, &c, h, k);
            // Midpoint rule on the smooth remainder.
            assert!((w - brute).norm() / brute.norm() < 0.25 * (k * h).powi(2), "{x:?}: {w} vs {brute}");
        }
    }

    #[test]
    fn voxel_weight_centre_equals_self_weight() {
        let w = voxel_weight(&Vec3::zeros(), &Vec3::zeros(), 0.2, 2.0);
        assert_eq!(w, self_weight(0.2, 2.0));
        let near = voxel_weight(&Vec3::new(1e-9, 0.0, 0.0), &Vec3::zeros(), 0.2, 2.0);
        assert!((near - w).norm() < 1e-9);
    }

    #[test]
    fn voxel_weight_gradient_matches_finite_differences() {
        let c = Vec3::new(0.1, 0.1, 0.1);
        let h = 0.2;
        let k = 1.1;
        for x in [Vec3::new(0.13, 0.05, 0.17), Vec3::new(0.6, -0.3, 0.2)] {
            let g = voxel_weight_grad(&x, &c, h, k);
            for i in 0..3 {
                let mut e = Vec3::zeros();
                e[i] = 1e-7;
                let fd = (voxel_weight(&(x + e), &c, h, k) - voxel_weight(&(x - e), &c, h, k)) / 2e-7;
                assert!((fd - g[i]).norm() < 1e-6 * g.norm().max(1e-3), "{x:?} axis {i}");
            }
        }
    }
}
