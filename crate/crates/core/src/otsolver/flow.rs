//! Transportation problem with arbitrary masses, solved by successive
//! shortest paths (Dijkstra with potentials on the dense residual graph).

const MASS_EPS: f64 = 1e-15;

/// Returns the dense `n x m` flow matrix of a minimum-cost transport between
/// `supply` and `demand`.
pub(crate) fn solve(cost: &[f64], supply: &[f64], demand: &[f64]) -> Vec<f64> {
    let (n, m) = (supply.len(), demand.len());
    let mut flow = vec![0.0f64; n * m];
    let mut left: Vec<f64> = supply.to_vec();
    let mut need: Vec<f64> = demand.to_vec();
    // potentials: sources 0..n, sinks n..n+m
    let mut pot = vec![0.0f64; n + m];
    let mut dist = vec![0.0f64; n + m];
    let mut prev = vec![usize::MAX; n + m];
    let mut done = vec![false; n + m];

    loop {
        if !left.iter().any(|s| *s > MASS_EPS) || !need.iter().any(|d| *d > MASS_EPS) {
            break;
        }
        dist.iter_mut().for_each(|d| *d = f64::INFINITY);
        prev.iter_mut().for_each(|p| *p = usize::MAX);
        done.iter_mut().for_each(|b| *b = false);
        for i in 0..n {
            if left[i] > MASS_EPS {
                dist[i] = 0.0;
            }
        }
        let mut target = usize::MAX;
        loop {
            let mut u = usize::MAX;
            let mut best = f64::INFINITY;
            for (k, d) in dist.iter().enumerate() {
                if !done[k] && *d < best {
                    best = *d;
                    u = k;
                }
            }
            if u == usize::MAX {
                break;
            }
            done[u] = true;
            if u >= n && need[u - n] > MASS_EPS {
                target = u;
                break;
            }
            if u < n {
                for j in 0..m {
                    let v = n + j;
                    if done[v] {
                        continue;
                    }
                    let rc = (cost[u * m + j] + pot[u] - pot[v]).max(0.0);
                    if dist[u] + rc < dist[v] {
                        dist[v] = dist[u] + rc;
                        prev[v] = u;
                    }
                }
            } else {
                let j = u - n;
                for i in 0..n {
                    if done[i] || flow[i * m + j] <= MASS_EPS {
                        continue;
                    }
                    let rc = (-cost[i * m + j] + pot[u] - pot[i]).max(0.0);
                    if dist[u] + rc < dist[i] {
                        dist[i] = dist[u] + rc;
                        prev[i] = u;
                    }
                }
            }
        }
        if target == usize::MAX {
            break;
        }
        let reach = dist[target];
        for k in 0..n + m {
            pot[k] += dist[k].min(reach);
        }
        // bottleneck along the path
        let mut amount = need[target - n];
        let mut v = target;
        while prev[v] != usize::MAX {
            let u = prev[v];
            if u >= n {
                amount = amount.min(flow[v * m + (u - n)]);
            }
            v = u;
        }
        amount = amount.min(left[v]);
        let origin = v;
        let mut v = target;
        while prev[v] != usize::MAX {
            let u = prev[v];
            if u < n {
                flow[u * m + (v - n)] += amount;
            } else {
                let f = &mut flow[v * m + (u - n)];
                *f -= amount;
                if *f <= MASS_EPS {
                    *f = 0.0;
                }
            }
            v = u;
        }
        left[origin] -= amount;
        if left[origin] <= MASS_EPS {
            left[origin] = 0.0;
        }
        need[target - n] -= amount;
        if need[target - n] <= MASS_EPS {
            need[target - n] = 0.0;
        }
    }
    flow
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_three() {
        // supplies (0.5, 0.5) to demands (0.25, 0.25, 0.5)
        let cost = [0.0, 1.0, 2.0, 2.0, 1.0, 0.0];
        let f = solve(&cost, &[0.5, 0.5], &[0.25, 0.25, 0.5]);
        let total: f64 = f.iter().zip(&cost).map(|(a, b)| a * b).sum();
        assert!((total - 0.25).abs() < 1e-15, "{total}");
    }
}
