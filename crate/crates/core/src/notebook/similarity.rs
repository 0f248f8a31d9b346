use super::Notebook;

/// Character-level Levenshtein distance (unit costs), two-row DP.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    // a shared prefix or suffix never changes the distance
    let pre = a.iter().zip(&b).take_while(|(x, y)| x == y).count();
    let (a, b) = (&a[pre..], &b[pre..]);
    let suf = a.iter().rev().zip(b.iter().rev()).take_while(|(x, y)| x == y).count();
    let (a, b) = (&a[..a.len() - suf], &b[..b.len() - suf]);
    let (long, short) = if a.len() >= b.len() { (a, b) } else { (b, a) };
    if short.is_empty() {
        return long.len();
    }
    let mut prev: Vec<usize> = (0..=short.len()).collect();
    let mut cur = vec![0; short.len() + 1];
    for (i, lc) in long.iter().enumerate() {
        cur[0] = i + 1;
        for (j, sc) in short.iter().enumerate() {
            let subst = prev[j] + usize::from(lc != sc);
            cur[j + 1] = subst.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[short.len()]
}

/// `1 - levenshtein(a, b) / max(len(a), len(b))` over characters; 1 when
/// both are empty.
pub fn edit_similarity(a: &str, b: &str) -> f64 {
    let max_len = a.chars().count().max(b.chars().count());
    if max_len == 0 {
        return 1.0;
    }
    1.0 - levenshtein(a, b) as f64 / max_len as f64
}

/// Code-cell sources joined by single newlines; markdown is excluded.
pub fn code_text(nb: &Notebook) -> String {
    nb.code_cells()
        .map(|c| c.source.as_str())
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn notebook_similarity(a: &Notebook, b: &Notebook) -> f64 {
    edit_similarity(&code_text(a), &code_text(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::notebook::Cell;

    #[test]
    fn documented_values() {
        assert_eq!(edit_similarity("abc", "abc"), 1.0);
        assert_eq!(edit_similarity("abc", ""), 0.0);
        assert_eq!(edit_similarity("", ""), 1.0);
        assert!((edit_similarity("kitten", "sitting") - (1.0 - 3.0 / 7.0)).abs() < 1e-15);
    }

    #[test]
    fn counts_chars_not_bytes() {
        assert_eq!(levenshtein("héllo", "hello"), 1);
        assert_eq!(edit_similarity("é", "e"), 0.0);
    }

    #[test]
    fn markdown_excluded_from_code_text() {
        let nb = Notebook::from_cells([Cell::code("a"), Cell::markdown("m"), Cell::code("b")]);
        assert_eq!(code_text(&nb), "a\nb");
    }
}
