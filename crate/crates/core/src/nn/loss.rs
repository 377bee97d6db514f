use crate::error::{Error, Result};

/// Mean over steps of the squared Euclidean distance between action vectors.
pub fn kd_loss(student: &[[f32; 8]], teacher: &[[f32; 8]]) -> Result<f32> {
    if student.len() != teacher.len() || student.is_empty() {
        return Err(Error::Shape {
            op: "kd_loss",
            left: vec![student.len(), 8],
            right: vec![teacher.len(), 8],
        });
    }
    let sum: f64 = student
        .iter()
        .zip(teacher)
        .map(|(s, t)| {
            s.iter()
                .zip(t)
                .map(|(a, b)| {
                    let d = f64::from(*a) - f64::from(*b);
                    d * d
                })
                .sum::<f64>()
        })
        .sum();
    Ok((sum / student.len() as f64) as f32)
}
