/// Seed list for `--seeds`: `N` means `0..N`, `a-b` is inclusive, and a
/// comma list is taken literally.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Seeds(pub Vec<u64>);

pub fn parse(s: &str) -> Result<Seeds, String> {
    let s = s.trim();
    let num = |t: &str| t.trim().parse::<u64>().map_err(|_| format!("`{t}` is not a seed"));
    let seeds: Vec<u64> = if s.contains(',') {
        s.split(',').map(num).collect::<Result<_, _>>()?
    } else if let Some((a, b)) = s.split_once('-') {
        let (a, b) = (num(a)?, num(b)?);
        if a > b {
            return Err(format!("empty seed range {s}"));
        }
        (a..=b).collect()
    } else {
        (0..num(s)?).collect()
    };
    if seeds.is_empty() {
        return Err("no seeds".into());
    }
    Ok(Seeds(seeds))
}
