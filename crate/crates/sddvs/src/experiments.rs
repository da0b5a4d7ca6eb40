//! The three benchmark problems shared by the examples, the binary, and the
//! test suite: a 1D two-subdomain diffusion problem, a 2D three-strip
//! diffusion problem, and a 2D two-subdomain convection-diffusion problem
//! with high-dimensional random sources.

use std::sync::Arc;

use thiserror::Error;

use crate::coeffspace::{CoeffExpr, CoeffError, Distribution, ParameterSpace, SpaceRef};
use crate::fem::{
    assemble_affine, build_mesh, AssembledSystem, BoundarySpec, CoeffPiece, CoefficientField,
    FemError, MeshSpec, Regions, Spatial, VelocityField, VelocityPiece,
};
use crate::randomfield::{build_kl, CovarianceSpec, KLExpansion, RandomFieldError};

#[derive(Debug, Error)]
pub enum BuildError {
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error(transparent)]
    Coeff(#[from] CoeffError),
    #[error(transparent)]
    RandomField(#[from] RandomFieldError),
    #[error("bad problem parameter: {0}")]
    BadParameter(String),
}

/// A fully assembled benchmark problem.
pub struct Problem {
    pub name: &'static str,
    pub space: SpaceRef,
    pub system: AssembledSystem,
    pub regions: Regions,
    /// mesh node monitored for density studies, when the problem defines one
    pub monitored_node: Option<usize>,
    /// KL expansions driving random sources, in coordinate-offset order
    pub kl: Vec<KLExpansion>,
}

/// 1D diffusion on (0,1), homogeneous Dirichlet, two subdomains split at 0.5.
/// Diffusivity xi*x + 4 on the left half, x + 1 on the right; source
/// cos(2 pi x) on the left, xi^2 x on the right; xi truncated normal on
/// [-3, 3]. Desk-scale default: 200 elements.
pub fn example1(n_elems: usize) -> Result<Problem, BuildError> {
    if n_elems % 2 != 0 {
        return Err(BuildError::BadParameter(format!(
            "element count must be even to align the split at 0.5, got {n_elems}"
        )));
    }
    let space = ParameterSpace::iid(
        Distribution::TruncatedNormal { mean: 0.0, stddev: 1.0, lo: -3.0, hi: 3.0 },
        1,
        "1D diffusion coefficient parameter",
    )?;
    let mesh = Arc::new(build_mesh(&MeshSpec::Interval1D { a: 0.0, b: 1.0, n_elems })?);
    let regions = Regions(vec![
        Arc::new(|x: &[f64]| x[0] <= 0.5),
        Arc::new(|x: &[f64]| x[0] > 0.5),
    ]);
    let xi = CoeffExpr::coordinate(&space, 0)?;
    let xi_sq = crate::coeffspace::product(&xi, &xi)?;
    let diffusion = CoefficientField {
        pieces: vec![
            CoeffPiece {
                region: 0,
                terms: vec![
                    (Spatial::Analytic(Arc::new(|x: &[f64]| x[0])), xi),
                    (Spatial::constant(4.0), CoeffExpr::constant(1.0)),
                ],
            },
            CoeffPiece {
                region: 1,
                terms: vec![(
                    Spatial::Analytic(Arc::new(|x: &[f64]| x[0] + 1.0)),
                    CoeffExpr::constant(1.0),
                )],
            },
        ],
    };
    let source = CoefficientField {
        pieces: vec![
            CoeffPiece {
                region: 0,
                terms: vec![(
                    Spatial::Analytic(Arc::new(|x: &[f64]| {
                        (2.0 * std::f64::consts::PI * x[0]).cos()
                    })),
                    CoeffExpr::constant(1.0),
                )],
            },
            CoeffPiece {
                region: 1,
                terms: vec![(Spatial::Analytic(Arc::new(|x: &[f64]| x[0])), xi_sq)],
            },
        ],
    };
    let system = assemble_affine(
        &mesh,
        &regions,
        &diffusion,
        None,
        &source,
        &BoundarySpec::homogeneous_dirichlet(),
    )?;
    Ok(Problem {
        name: "ex1",
        space,
        system,
        regions,
        monitored_node: None,
        kl: Vec::new(),
    })
}

/// 2D diffusion on (0,100)^2 with three horizontal strips split at y=30 and
/// y=70. Diffusivity 80/mu | xi/mu | 20/mu with mu=0.02 and xi uniform on
/// [1,4]; zero source; point Dirichlet values 20 at (0,0) and 15 at
/// (100,100); homogeneous Neumann elsewhere. Desk-scale default: 40x40 cells.
pub fn example2(nx: usize, ny: usize) -> Result<Problem, BuildError> {
    let hy = 100.0 / ny as f64;
    if (30.0 / hy).fract() != 0.0 || (70.0 / hy).fract() != 0.0 {
        return Err(BuildError::BadParameter(format!(
            "{ny} rows do not align cell boundaries with y=30 and y=70"
        )));
    }
    let space = ParameterSpace::iid(
        Distribution::Uniform { lo: 1.0, hi: 4.0 },
        1,
        "middle-strip diffusivity parameter",
    )?;
    let mesh = Arc::new(build_mesh(&MeshSpec::StructuredTri2D {
        x_range: (0.0, 100.0),
        y_range: (0.0, 100.0),
        nx,
        ny,
    })?);
    let regions = Regions(vec![
        Arc::new(|x: &[f64]| x[1] <= 30.0),
        Arc::new(|x: &[f64]| x[1] > 30.0 && x[1] <= 70.0),
        Arc::new(|x: &[f64]| x[1] > 70.0),
    ]);
    let mu = 0.02;
    let xi = CoeffExpr::coordinate(&space, 0)?;
    let diffusion = CoefficientField {
        pieces: vec![
            CoeffPiece {
                region: 0,
                terms: vec![(Spatial::constant(80.0 / mu), CoeffExpr::constant(1.0))],
            },
            CoeffPiece { region: 1, terms: vec![(Spatial::constant(1.0 / mu), xi)] },
            CoeffPiece {
                region: 2,
                terms: vec![(Spatial::constant(20.0 / mu), CoeffExpr::constant(1.0))],
            },
        ],
    };
    let source = CoefficientField { pieces: Vec::new() };
    let near = |a: f64, b: f64| (a - b).abs() < 1e-9;
    let bc = BoundarySpec {
        dirichlet: vec![
            (
                Arc::new(move |x: &[f64]| near(x[0], 0.0) && near(x[1], 0.0)),
                CoeffExpr::constant(20.0),
            ),
            (
                Arc::new(move |x: &[f64]| near(x[0], 100.0) && near(x[1], 100.0)),
                CoeffExpr::constant(15.0),
            ),
        ],
        neumann: Vec::new(),
    };
    let system = assemble_affine(&mesh, &regions, &diffusion, None, &source, &bc)?;
    // monitor the interface node closest to (50, 30)
    let monitored = (0..mesh.n_nodes())
        .min_by(|&a, &b| {
            let d = |n: usize| {
                let p = mesh.node(n);
                (p[0] - 50.0).powi(2) + (p[1] - 30.0).powi(2)
            };
            d(a).partial_cmp(&d(b)).unwrap()
        })
        .unwrap();
    Ok(Problem {
        name: "ex2",
        space,
        system,
        regions,
        monitored_node: Some(monitored),
        kl: Vec::new(),
    })
}

/// 2D convection-diffusion on the unit square, homogeneous Dirichlet, two
/// subdomains split at x=0.5. Diffusivity xi_33 + y*xi_34 + 3 (1-based paper
/// indices; coordinates 32 and 33 here), unit velocity (1,1), and a KL random
/// source per subdomain with 16 modes each: coordinates 0..16 drive the left
/// field (l_x=0.5), 16..32 the right field (l_x=0.05), all uniform on [-1,1].
/// Desk-scale default: 20x20 cells.
pub fn example3(nx: usize, ny: usize, n_modes: usize) -> Result<Problem, BuildError> {
    if nx % 2 != 0 {
        return Err(BuildError::BadParameter(format!(
            "column count must be even to align the split at x=0.5, got {nx}"
        )));
    }
    let dims = 2 * n_modes + 2;
    let space = ParameterSpace::iid(
        Distribution::Uniform { lo: -1.0, hi: 1.0 },
        dims,
        "KL source modes plus diffusivity parameters",
    )?;
    let mesh = Arc::new(build_mesh(&MeshSpec::StructuredTri2D {
        x_range: (0.0, 1.0),
        y_range: (0.0, 1.0),
        nx,
        ny,
    })?);
    let regions = Regions(vec![
        Arc::new(|x: &[f64]| x[0] <= 0.5),
        Arc::new(|x: &[f64]| x[0] > 0.5),
    ]);
    let c0 = CoeffExpr::coordinate(&space, dims - 2)?;
    let c1 = CoeffExpr::coordinate(&space, dims - 1)?;
    let region_terms = |_r: usize| -> Vec<(Spatial, CoeffExpr)> {
        vec![
            (Spatial::constant(1.0), c0.clone()),
            (Spatial::Analytic(Arc::new(|x: &[f64]| x[1])), c1.clone()),
            (Spatial::constant(3.0), CoeffExpr::constant(1.0)),
        ]
    };
    let diffusion = CoefficientField {
        pieces: vec![
            CoeffPiece { region: 0, terms: region_terms(0) },
            CoeffPiece { region: 1, terms: region_terms(1) },
        ],
    };
    let unit_velocity: crate::fem::VelocityFn = Arc::new(|_: &[f64]| [1.0, 1.0]);
    let velocity = VelocityField {
        pieces: vec![
            VelocityPiece {
                region: 0,
                terms: vec![(Arc::clone(&unit_velocity), CoeffExpr::constant(1.0))],
            },
            VelocityPiece {
                region: 1,
                terms: vec![(unit_velocity, CoeffExpr::constant(1.0))],
            },
        ],
    };

    let elem_regions = crate::fem::assign_elements(&mesh, &regions)?;
    let cov1 = CovarianceSpec { sigma: 0.1, lx: 0.5, ly: 0.5 };
    let cov2 = CovarianceSpec { sigma: 0.1, lx: 0.05, ly: 0.5 };
    let kl1 = build_kl(&mesh, &elem_regions, 0, &cov1, 1.0, n_modes)?;
    let kl2 = build_kl(&mesh, &elem_regions, 1, &cov2, 1.0, n_modes)?;
    let source = CoefficientField {
        pieces: vec![
            kl1.as_affine_source(&space, 0)?,
            kl2.as_affine_source(&space, n_modes)?,
        ],
    };

    let system = assemble_affine(
        &mesh,
        &regions,
        &diffusion,
        Some(&velocity),
        &source,
        &BoundarySpec::homogeneous_dirichlet(),
    )?;
    Ok(Problem {
        name: "ex3",
        space,
        system,
        regions,
        monitored_node: None,
        kl: vec![kl1, kl2],
    })
}
