//! Table factors over network variables, the workhorse of variable
//! elimination. Variables are kept sorted ascending; values are row-major
//! with the last variable varying fastest.

#[derive(Debug, Clone)]
pub struct Factor {
    pub vars: Vec<usize>,
    pub card: Vec<usize>,
    pub values: Vec<f64>,
}

impl Factor {
    pub fn constant(v: f64) -> Self {
        Factor { vars: Vec::new(), card: Vec::new(), values: vec![v] }
    }

    /// Builds a factor from an assignment-indexed table. `vars` need not be
    /// sorted; the table is reindexed so the factor's variables are.
    pub fn from_table(vars: Vec<usize>, card: Vec<usize>, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), card.iter().product::<usize>());
        let mut order: Vec<usize> = (0..vars.len()).collect();
        order.sort_by_key(|&i| vars[i]);
        if order.iter().enumerate().all(|(i, &o)| i == o) {
            return Factor { vars, card, values };
        }
        let new_vars: Vec<usize> = order.iter().map(|&i| vars[i]).collect();
        let new_card: Vec<usize> = order.iter().map(|&i| card[i]).collect();
        let mut new_values = vec![0.0; values.len()];
        let n = vars.len();
        let mut idx = vec![0usize; n];
        for &v in &values {
            // position of this assignment in the new layout
            let mut pos = 0usize;
            for &o in &order {
                pos = pos * card[o] + idx[o];
            }
            new_values[pos] = v;
            for d in (0..n).rev() {
                idx[d] += 1;
                if idx[d] < card[d] {
                    break;
                }
                idx[d] = 0;
            }
        }
        Factor { vars: new_vars, card: new_card, values: new_values }
    }

    pub fn product(&self, other: &Factor) -> Factor {
        // merged sorted variable union
        let mut vars = Vec::new();
        let mut card = Vec::new();
        let (mut i, mut j) = (0, 0);
        while i < self.vars.len() || j < other.vars.len() {
            if j >= other.vars.len()
                || (i < self.vars.len() && self.vars[i] < other.vars[j])
            {
                vars.push(self.vars[i]);
                card.push(self.card[i]);
                i += 1;
            } else if i >= self.vars.len() || other.vars[j] < self.vars[i] {
                vars.push(other.vars[j]);
                card.push(other.card[j]);
                j += 1;
            } else {
                debug_assert_eq!(self.card[i], other.card[j]);
                vars.push(self.vars[i]);
                card.push(self.card[i]);
                i += 1;
                j += 1;
            }
        }
        let map_a: Vec<usize> = self.vars.iter().map(|v| vars.binary_search(v).unwrap()).collect();
        let map_b: Vec<usize> = other.vars.iter().map(|v| vars.binary_search(v).unwrap()).collect();
        let size: usize = card.iter().product();
        let mut values = vec![0.0; size];
        let n = vars.len();
        let mut idx = vec![0usize; n];
        for out in values.iter_mut() {
            let mut ia = 0usize;
            for (d, &m) in map_a.iter().enumerate() {
                ia = ia * self.card[d] + idx[m];
            }
            let mut ib = 0usize;
            for (d, &m) in map_b.iter().enumerate() {
                ib = ib * other.card[d] + idx[m];
            }
            *out = self.values[ia] * other.values[ib];
            for d in (0..n).rev() {
                idx[d] += 1;
                if idx[d] < card[d] {
                    break;
                }
                idx[d] = 0;
            }
        }
        Factor { vars, card, values }
    }

    /// Sums out one variable.
    pub fn sum_out(&self, var: usize) -> Factor {
        let pos = match self.vars.binary_search(&var) {
            Ok(p) => p,
            Err(_) => return self.clone(),
        };
        let mut vars = self.vars.clone();
        let mut card = self.card.clone();
        vars.remove(pos);
        let k = card.remove(pos);
        let size: usize = card.iter().product();
        let mut values = vec![0.0; size];
        let inner: usize = self.card[pos + 1..].iter().product();
        for (i, &v) in self.values.iter().enumerate() {
            let hi = i / (inner * k);
            let lo = i % inner;
            values[hi * inner + lo] += v;
        }
        Factor { vars, card, values }
    }

    /// Fixes a variable to one state, dropping it from the scope.
    pub fn restrict(&self, var: usize, state: usize) -> Factor {
        let pos = match self.vars.binary_search(&var) {
            Ok(p) => p,
            Err(_) => return self.clone(),
        };
        let mut vars = self.vars.clone();
        let mut card = self.card.clone();
        vars.remove(pos);
        let k = card.remove(pos);
        let size: usize = card.iter().product();
        let mut values = vec![0.0; size];
        let inner: usize = self.card[pos + 1..].iter().product();
        for (o, out) in values.iter_mut().enumerate() {
            let hi = o / inner;
            let lo = o % inner;
            *out = self.values[(hi * k + state) * inner + lo];
        }
        Factor { vars, card, values }
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_and_sum_out_roundtrip() {
        let fa = Factor::from_table(vec![0], vec![2], vec![0.3, 0.7]);
        let fb = Factor::from_table(vec![1, 0], vec![2, 2], vec![0.9, 0.2, 0.1, 0.8]);
        // fb indexed (B, A); after sorting it is (A, B)
        assert_eq!(fb.vars, vec![0, 1]);
        assert_eq!(fb.values, vec![0.9, 0.1, 0.2, 0.8]);
        let joint = fa.product(&fb);
        assert!((joint.values[0] - 0.27).abs() < 1e-12);
        let pb = joint.sum_out(0);
        assert!((pb.values[0] - (0.27 + 0.14)).abs() < 1e-12);
        assert!((pb.sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn restrict_matches_manual() {
        let f = Factor::from_table(vec![0, 1], vec![2, 3], (0..6).map(|x| x as f64).collect());
        let r = f.restrict(1, 2);
        assert_eq!(r.values, vec![2.0, 5.0]);
        let r0 = f.restrict(0, 1);
        assert_eq!(r0.values, vec![3.0, 4.0, 5.0]);
    }
}
