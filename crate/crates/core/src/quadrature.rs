//! Hard-coded quadrature tables: symmetric rules on the reference triangle
//! and the five-point Gauss-Legendre rule on `[0, 1]`.

use crate::error::{Error, Result};

/// Quadrature on the reference triangle `{(x, y) : x, y >= 0, x + y <= 1}`.
///
/// Points are barycentric triples `(l0, l1, l2)` with `x = l1`, `y = l2`;
/// weights sum to the reference area `1/2`.
#[derive(Debug)]
pub struct TriangleRule {
    pub degree: usize,
    pub points: &'static [([f64; 3], f64)],
}

impl TriangleRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64; 3], f64)> + '_ {
        self.points.iter().map(|(p, w)| (p, *w))
    }

    /// Integrates `g(x, y)` over the reference triangle.
    pub fn integrate_reference(&self, mut g: impl FnMut(f64, f64) -> f64) -> f64 {
        self.points.iter().map(|(p, w)| w * g(p[1], p[2])).sum()
    }
}

/// Default rule degree used by assembly and diagnostics.
pub const ASSEMBLY_DEGREE: usize = 6;

static RULES: [TriangleRule; 7] = [
    TriangleRule { degree: 1, points: &RULE_1 },
    TriangleRule { degree: 2, points: &RULE_2 },
    TriangleRule { degree: 4, points: &RULE_4 },
    TriangleRule { degree: 5, points: &RULE_5 },
    TriangleRule { degree: 6, points: &RULE_6 },
    TriangleRule { degree: 8, points: &RULE_8 },
    TriangleRule { degree: 10, points: &RULE_10 },
];

/// Smallest tabulated rule that integrates every bivariate polynomial of
/// total degree `degree` exactly.
pub fn triangle_rule(degree: usize) -> Result<&'static TriangleRule> {
    if degree == 0 {
        return Err(Error::InvalidArgument("quadrature degree must be >= 1".into()));
    }
    RULES
        .iter()
        .find(|r| r.degree >= degree)
        .ok_or_else(|| Error::InvalidArgument(format!("no triangle rule of degree {degree} (max 10)")))
}

/// Five-point Gauss-Legendre rule on `[0, 1]`, exact up to degree 9.
pub struct LineRule5;

impl LineRule5 {
    pub const NODES: [f64; 5] = [
        0.04691007703066802,
        0.23076534494715845,
        0.5,
        0.7692346550528415,
        0.9530899229693319,
    ];
    pub const WEIGHTS: [f64; 5] = [
        0.11846344252809471,
        0.2393143352496831,
        0.2844444444444445,
        0.2393143352496831,
        0.11846344252809471,
    ];

    /// `sum_i w_i g(s_i)` over the whole unit interval.
    pub fn apply(mut g: impl FnMut(f64) -> f64) -> f64 {
        Self::NODES
            .iter()
            .zip(Self::WEIGHTS.iter())
            .map(|(&s, &w)| w * g(s))
            .sum()
    }

    /// Same rule mapped onto `[a, b]`.
    pub fn apply_on(a: f64, b: f64, mut g: impl FnMut(f64) -> f64) -> f64 {
        let len = b - a;
        len * Self::apply(|s| g(a + s * len))
    }
}

/// Five-point Gauss-Legendre approximation of `int_0^1 g(s) ds`.
pub fn gl5_average(g: impl FnMut(f64) -> f64) -> Result<f64> {
    let v = LineRule5::apply(g);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::InvalidData(format!("non-finite integrand in line quadrature ({v})")))
    }
}

// Generated offline: Dunavant orbits (degrees 4 and 6) refined to double
// precision, the Radon 7-point rule, and Stroud conical products (8, 10).
const RULE_1: [([f64; 3], f64); 1] = [
    ([0.3333333333333333, 0.3333333333333333, 0.3333333333333333], 0.5),
];
const RULE_2: [([f64; 3], f64); 3] = [
    ([0.16666666666666666, 0.16666666666666666, 0.6666666666666667], 0.16666666666666666),
    ([0.16666666666666666, 0.6666666666666667, 0.16666666666666666], 0.16666666666666666),
    ([0.6666666666666667, 0.16666666666666666, 0.16666666666666666], 0.16666666666666666),
];
const RULE_4: [([f64; 3], f64); 6] = [
    ([0.09157621350977074, 0.09157621350977074, 0.8168475729804585], 0.054975871827660935),
    ([0.09157621350977074, 0.8168475729804585, 0.09157621350977074], 0.054975871827660935),
    ([0.10810301816807022, 0.4459484909159649, 0.4459484909159649], 0.11169079483900574),
    ([0.4459484909159649, 0.10810301816807022, 0.4459484909159649], 0.11169079483900574),
    ([0.4459484909159649, 0.4459484909159649, 0.10810301816807022], 0.11169079483900574),
    ([0.8168475729804585, 0.09157621350977074, 0.09157621350977074], 0.054975871827660935),
];
const RULE_5: [([f64; 3], f64); 7] = [
    ([0.05971587178976989, 0.47014206410511505, 0.47014206410511505], 0.06619707639425308),
    ([0.10128650732345633, 0.10128650732345633, 0.7974269853530873], 0.06296959027241358),
    ([0.10128650732345633, 0.7974269853530873, 0.10128650732345633], 0.06296959027241358),
    ([0.3333333333333333, 0.3333333333333333, 0.3333333333333333], 0.1125),
    ([0.47014206410511505, 0.05971587178976989, 0.47014206410511505], 0.06619707639425308),
    ([0.47014206410511505, 0.47014206410511505, 0.05971587178976989], 0.06619707639425308),
    ([0.7974269853530873, 0.10128650732345633, 0.10128650732345633], 0.06296959027241358),
];
const RULE_6: [([f64; 3], f64); 12] = [
    ([0.053145049844816945, 0.3103524510337844, 0.6365024991213987], 0.041425537809186785),
    ([0.053145049844816945, 0.6365024991213987, 0.3103524510337844], 0.041425537809186785),
    ([0.06308901449150223, 0.06308901449150223, 0.8738219710169955], 0.02542245318510341),
    ([0.06308901449150223, 0.8738219710169955, 0.06308901449150223], 0.02542245318510341),
    ([0.24928674517091043, 0.24928674517091043, 0.5014265096581791], 0.058393137863189684),
    ([0.24928674517091043, 0.5014265096581791, 0.24928674517091043], 0.058393137863189684),
    ([0.3103524510337844, 0.053145049844816945, 0.6365024991213987], 0.041425537809186785),
    ([0.3103524510337844, 0.6365024991213987, 0.053145049844816945], 0.041425537809186785),
    ([0.5014265096581791, 0.24928674517091043, 0.24928674517091043], 0.058393137863189684),
    ([0.6365024991213987, 0.053145049844816945, 0.3103524510337844], 0.041425537809186785),
    ([0.6365024991213987, 0.3103524510337844, 0.053145049844816945], 0.041425537809186785),
    ([0.8738219710169955, 0.06308901449150223, 0.06308901449150223], 0.02542245318510341),
];
const RULE_8: [([f64; 3], f64); 25] = [
    ([0.004622288465046434, 0.9014649142011736, 0.09391279733377998], 0.0018655521668778402),
    ([0.014285794395571427, 0.6954642733536361, 0.29024993225079243], 0.008755499182163829),
    ([0.02273848306376404, 0.9014649142011736, 0.07579660273506238], 0.0037687016953276264),
    ([0.026364644944470994, 0.43797481024738616, 0.5356605448081428], 0.017341506431365696),
    ([0.03762125234511127, 0.1980134178736082, 0.7643653297812806], 0.01980408313204736),
    ([0.04504259356980378, 0.03980985705146872, 0.9151475493787276], 0.011465080351592518),
    ([0.04926754289941321, 0.9014649142011736, 0.04926754289941321], 0.004479406797281366),
    ([0.07027629200828173, 0.6954642733536361, 0.23425943463808213], 0.01768745211048347),
    ([0.07579660273506239, 0.9014649142011736, 0.022738483063764033], 0.0037687016953276264),
    ([0.09391279733377998, 0.9014649142011736, 0.00462228846504643], 0.0018655521668778402),
    ([0.12969593678225416, 0.43797481024738616, 0.4323292529703597], 0.03503250450337173),
    ([0.15226786332318193, 0.6954642733536361, 0.15226786332318193], 0.021022967487322082),
    ([0.18507071026738953, 0.1980134178736082, 0.6169158718590023], 0.04000728738616046),
    ([0.2215786095523793, 0.03980985705146872, 0.738611533396152], 0.023161221929498342),
    ([0.23425943463808213, 0.6954642733536361, 0.07027629200828171], 0.01768745211048347),
    ([0.2810125948763069, 0.43797481024738616, 0.2810125948763069], 0.04163896521519499),
    ([0.2902499322507925, 0.6954642733536361, 0.014285794395571387], 0.008755499182163829),
    ([0.4009932910631959, 0.1980134178736082, 0.4009932910631959], 0.047551897057954054),
    ([0.43232925297035973, 0.43797481024738616, 0.1296959367822541], 0.03503250450337173),
    ([0.48009507147426567, 0.03980985705146872, 0.48009507147426567], 0.02752898566446976),
    ([0.535660544808143, 0.43797481024738616, 0.026364644944470925], 0.017341506431365696),
    ([0.6169158718590024, 0.1980134178736082, 0.18507071026738944], 0.04000728738616046),
    ([0.7386115333961522, 0.03980985705146872, 0.2215786095523792], 0.023161221929498342),
    ([0.7643653297812807, 0.1980134178736082, 0.037621252345111204], 0.01980408313204736),
    ([0.9151475493787276, 0.03980985705146872, 0.04504259356980374], 0.011465080351592518),
];
const RULE_10: [([f64; 3], f64); 36] = [
    ([0.0024666971526702414, 0.926945671319741, 0.07058763152758872], 0.0007485425612363173),
    ([0.007791874701286422, 0.7692338620300545, 0.22297426326865907], 0.003765298212691668),
    ([0.012375060417440055, 0.926945671319741, 0.06067926826281891], 0.0015762217540235878),
    ([0.014901563366671144, 0.5586715187715502, 0.42642691786177866], 0.008451535796943108),
    ([0.02238687297803066, 0.3369846902811543, 0.640628436740815], 0.012060606404265088),
    ([0.027811082115360604, 0.926945671319741, 0.04524324656489836], 0.002044386591544859),
    ([0.028765333012559124, 0.1480785996684843, 0.8231560673189565], 0.011610874766997507),
    ([0.0327753666144599, 0.02931642715978494, 0.9379082062257551], 0.006194265352658861),
    ([0.03909070073282425, 0.7692338620300545, 0.19167543723712124], 0.00792866733379648),
    ([0.04524324656489835, 0.926945671319741, 0.027811082115360607], 0.002044386591544859),
    ([0.060679268262818914, 0.926945671319741, 0.012375060417440052], 0.0015762217540235878),
    ([0.07058763152758872, 0.926945671319741, 0.002466697152670245], 0.0007485425612363173),
    ([0.07475897346264909, 0.5586715187715502, 0.3665695077658007], 0.017796575997026262),
    ([0.0878504549759972, 0.7692338620300545, 0.1429156829939483], 0.01028361722876633),
    ([0.11231168178095374, 0.3369846902811543, 0.550703627937892], 0.025396271589047635),
    ([0.1429156829939483, 0.7692338620300545, 0.08785045497599718], 0.01028361722876633),
    ([0.14431148695041662, 0.1480785996684843, 0.707609913381099], 0.02444926225805782),
    ([0.1644292415948274, 0.02931642715978494, 0.8062543312453876], 0.013043394330082867),
    ([0.16800951912119183, 0.5586715187715502, 0.273318962107258], 0.02308246365135823),
    ([0.19167543723712124, 0.7692338620300545, 0.039090700732824245], 0.00792866733379648),
    ([0.22297426326865907, 0.7692338620300545, 0.007791874701286429], 0.003765298212691668),
    ([0.252403568076518, 0.3369846902811543, 0.4106117416423277], 0.03293939890078668),
    ([0.273318962107258, 0.5586715187715502, 0.16800951912119183], 0.02308246365135823),
    ([0.324318304588776, 0.1480785996684843, 0.5276030957427397], 0.03171111159070401),
    ([0.3665695077658007, 0.5586715187715502, 0.07475897346264909], 0.017796575997026262),
    ([0.36952992437237664, 0.02931642715978494, 0.6011536484678384], 0.016917505680012716),
    ([0.4106117416423277, 0.3369846902811543, 0.252403568076518], 0.03293939890078668),
    ([0.42642691786177866, 0.5586715187715502, 0.014901563366671153], 0.008451535796943108),
    ([0.5276030957427397, 0.1480785996684843, 0.324318304588776], 0.03171111159070401),
    ([0.550703627937892, 0.3369846902811543, 0.1123116817809537], 0.025396271589047635),
    ([0.6011536484678384, 0.02931642715978494, 0.36952992437237664], 0.016917505680012716),
    ([0.640628436740815, 0.3369846902811543, 0.022386872978030627], 0.012060606404265088),
    ([0.707609913381099, 0.1480785996684843, 0.14431148695041665], 0.02444926225805782),
    ([0.8062543312453876, 0.02931642715978494, 0.16442924159482744], 0.013043394330082867),
    ([0.8231560673189565, 0.1480785996684843, 0.028765333012559118], 0.011610874766997507),
    ([0.9379082062257551, 0.02931642715978494, 0.03277536661445988], 0.006194265352658861),
];

#[cfg(test)]
mod tests {
    use super::*;

    fn factorial(n: u32) -> f64 {
        (1..=n).map(f64::from).product()
    }

    // int_T x^i y^j = i! j! / (i + j + 2)!
    fn monomial_exact(i: u32, j: u32) -> f64 {
        factorial(i) * factorial(j) / factorial(i + j + 2)
    }

    #[test]
    fn every_rule_is_exact_to_its_degree() {
        for rule in RULES.iter() {
            let d = rule.degree as u32;
            for i in 0..=d {
                for j in 0..=(d - i) {
                    let q = rule.integrate_reference(|x, y| x.powi(i as i32) * y.powi(j as i32));
                    let e = monomial_exact(i, j);
                    assert!((q - e).abs() <= 1e-14 * e.max(1e-3), "deg {d} x^{i} y^{j}: {q} vs {e}");
                }
            }
        }
    }

    #[test]
    fn weights_positive_points_inside() {
        for rule in RULES.iter() {
            let total: f64 = rule.points.iter().map(|p| p.1).sum();
            assert!((total - 0.5).abs() < 1e-14);
            for (p, w) in rule.points {
                assert!(*w > 0.0);
                assert!(p.iter().all(|&l| (0.0..=1.0).contains(&l)));
                assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn reference_integrals() {
        let r = triangle_rule(1).unwrap();
        assert!((r.integrate_reference(|_, _| 1.0) - 0.5).abs() < 1e-15);
        assert!((r.integrate_reference(|x, _| x) - 1.0 / 6.0).abs() < 1e-15);
        let r4 = triangle_rule(4).unwrap();
        assert!((r4.integrate_reference(|x, y| x * x * y * y) - 1.0 / 180.0).abs() < 1e-15);
    }

    #[test]
    fn degree_selection() {
        assert_eq!(triangle_rule(3).unwrap().degree, 4);
        assert_eq!(triangle_rule(6).unwrap().len(), 12);
        assert_eq!(triangle_rule(10).unwrap().degree, 10);
        assert!(triangle_rule(0).is_err());
        assert!(triangle_rule(11).is_err());
    }

    #[test]
    fn gl5_constants_and_exactness_boundary() {
        assert!((gl5_average(|_| 3.5).unwrap() - 3.5).abs() < 1e-15);
        let w: f64 = LineRule5::WEIGHTS.iter().sum();
        assert!((w - 1.0).abs() < 1e-15);
        for k in 0..=9 {
            let q = gl5_average(|s| s.powi(k)).unwrap();
            let e = 1.0 / f64::from(k + 1);
            assert!(((q - e) / e).abs() <= 1e-13, "s^{k}");
        }
        let q10 = gl5_average(|s| s.powi(10)).unwrap();
        assert!((q10 - 1.0 / 11.0).abs() > 1e-9);
        assert!(gl5_average(|_| f64::NAN).is_err());
    }
}
