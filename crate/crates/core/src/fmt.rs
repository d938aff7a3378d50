/// Fixed 9-significant-digit scientific notation used by every CSV writer.
pub fn sig9(x: f64) -> String {
    if x.is_nan() {
        return "NaN".to_string();
    }
    format!("{x:.8e}")
}
