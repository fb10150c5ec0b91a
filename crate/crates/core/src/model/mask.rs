use std::rc::Rc;

use super::tape::AttnMask;

/// Binary attention matrix; `allowed(i, j)` means query `i` may see key `j`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AttentionMask {
    size: usize,
    cells: Vec<bool>,
}

impl AttentionMask {
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn allowed(&self, i: usize, j: usize) -> bool {
        self.cells[i * self.size + j]
    }

    pub fn to_rows(&self) -> Vec<Vec<u8>> {
        (0..self.size)
            .map(|i| (0..self.size).map(|j| self.allowed(i, j) as u8).collect())
            .collect()
    }

    pub(crate) fn to_attn(&self) -> AttnMask {
        AttnMask::Dense {
            rows: self.size,
            cols: self.size,
            allowed: Rc::new(self.cells.clone()),
        }
    }
}

/// Mask for one stack over `source ‖ target`: source rows see the whole
/// source and nothing of the target; target rows see the whole source plus
/// target positions up to and including their own.
pub fn partial_causal_mask(source_len: usize, target_len: usize) -> AttentionMask {
    let size = source_len + target_len;
    let mut cells = vec![false; size * size];
    for i in 0..size {
        for j in 0..size {
            cells[i * size + j] = j < source_len || (i >= source_len && j <= i);
        }
    }
    AttentionMask { size, cells }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_by_two() {
        let rows = partial_causal_mask(3, 2).to_rows();
        assert_eq!(
            rows,
            vec![
                vec![1, 1, 1, 0, 0],
                vec![1, 1, 1, 0, 0],
                vec![1, 1, 1, 0, 0],
                vec![1, 1, 1, 1, 0],
                vec![1, 1, 1, 1, 1],
            ]
        );
    }

    #[test]
    fn no_target_is_all_ones() {
        let m = partial_causal_mask(4, 0);
        assert_eq!(m.size(), 4);
        assert!(m.to_rows().iter().flatten().all(|&c| c == 1));
        assert_eq!(partial_causal_mask(0, 0).size(), 0);
    }
}
