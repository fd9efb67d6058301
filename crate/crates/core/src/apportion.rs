//! Largest-remainder (Hamilton) apportionment over integer weights.

/// Splits `total` units across `weights` proportionally.
///
/// Every share gets the floor of its exact quota; the leftover units go to the
/// largest fractional remainders, lower index first on ties. The result always
/// sums to `total` when at least one weight is positive. With all-zero weights
/// nothing can be apportioned and a zero vector is returned.
pub fn largest_remainder(total: u64, weights: &[u64]) -> Vec<u64> {
    let weight_sum: u128 = weights.iter().map(|&w| w as u128).sum();
    if weight_sum == 0 {
        return vec![0; weights.len()];
    }
    let total = total as u128;
    let mut shares = Vec::with_capacity(weights.len());
    let mut remainders = Vec::with_capacity(weights.len());
    for (idx, &w) in weights.iter().enumerate() {
        let scaled = total * w as u128;
        shares.push((scaled / weight_sum) as u64);
        remainders.push((scaled % weight_sum, idx));
    }
    let assigned: u128 = shares.iter().map(|&s| s as u128).sum();
    let leftover = (total - assigned) as usize;
    // remainders are numerators over the common denominator, so integer order is exact
    remainders.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, idx) in remainders.iter().take(leftover) {
        shares[idx] += 1;
    }
    shares
}

/// Rounds a non-negative ratio `numerator / denominator` half-up.
pub fn div_round_half_up(numerator: u64, denominator: u64) -> u64 {
    assert!(denominator > 0, "division by zero");
    ((2 * numerator as u128 + denominator as u128) / (2 * denominator as u128)) as u64
}

/// Rounds a non-negative real half-up. A tiny epsilon absorbs representation
/// error such as `0.15 * 10.0 = 1.4999999999999998`.
pub fn round_half_up(value: f64) -> u64 {
    if value <= 0.0 {
        return 0;
    }
    (value + 0.5 + 1e-9).floor() as u64
}
