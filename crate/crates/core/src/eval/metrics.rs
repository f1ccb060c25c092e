use crate::tfcore::TfMatrix;
use crate::{Error, Result};

fn check_dims(estimate: &TfMatrix, reference: &TfMatrix) -> Result<()> {
    if estimate.n() != reference.n() {
        return Err(Error::LengthMismatch {
            what: "distribution",
            expected: reference.as_slice().len(),
            actual: estimate.as_slice().len(),
        });
    }
    Ok(())
}

fn ratio_db(estimate: &[f64], est_scale: f64, reference: &[f64], ref_scale: f64) -> f64 {
    let mut err = 0.0;
    let mut energy = 0.0;
    for (e, r) in estimate.iter().zip(reference) {
        let r = r * ref_scale;
        let d = r - e * est_scale;
        err += d * d;
        energy += r * r;
    }
    10.0 * (err / energy).log10()
}

/// `10 log10(||ref - est||^2 / ||ref||^2)` in dB. A perfect estimate gives
/// `-inf`.
pub fn nmse(estimate: &TfMatrix, reference: &TfMatrix) -> Result<f64> {
    check_dims(estimate, reference)?;
    if reference.max_abs() == 0.0 {
        return Err(Error::ZeroReference);
    }
    Ok(ratio_db(
        estimate.as_slice(),
        1.0,
        reference.as_slice(),
        1.0,
    ))
}

/// NMSE after scaling both matrices to unit max-abs, so methods with
/// different global gains can be compared. An all-zero estimate gives 0 dB.
pub fn nmse_normalized(estimate: &TfMatrix, reference: &TfMatrix) -> Result<f64> {
    check_dims(estimate, reference)?;
    let ref_max = reference.max_abs();
    if ref_max == 0.0 {
        return Err(Error::ZeroReference);
    }
    let est_max = estimate.max_abs();
    let est_scale = if est_max > 0.0 { 1.0 / est_max } else { 0.0 };
    Ok(ratio_db(
        estimate.as_slice(),
        est_scale,
        reference.as_slice(),
        1.0 / ref_max,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat(values: &[f64]) -> TfMatrix {
        let mut data = vec![0.0; 16];
        data[..values.len()].copy_from_slice(values);
        TfMatrix::from_column_major(4, data).unwrap()
    }

    #[test]
    fn closed_forms() {
        let r = mat(&[1.0, 2.0, -3.0]);
        assert_eq!(nmse(&r, &r).unwrap(), f64::NEG_INFINITY);
        assert_eq!(nmse(&TfMatrix::zeros(4), &r).unwrap(), 0.0);
        let half = mat(&[0.5, 1.0, -1.5]);
        assert!((nmse(&half, &r).unwrap() - 10.0 * 0.25f64.log10()).abs() < 1e-12);
        // the normalized variant is blind to global gain
        assert_eq!(nmse_normalized(&half, &r).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn zero_reference() {
        let z = TfMatrix::zeros(4);
        assert!(matches!(nmse(&z, &z), Err(Error::ZeroReference)));
        assert!(matches!(nmse_normalized(&z, &z), Err(Error::ZeroReference)));
    }

    #[test]
    fn dims_checked() {
        assert!(nmse(&TfMatrix::zeros(8), &mat(&[1.0])).is_err());
    }
}
