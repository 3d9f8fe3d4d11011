// Merge unaligned variates onto one grid with a value matrix and mask.

use kafnet::{align, normalize_times, ImtsSample, Query, RawSeries};

pub fn run_example() -> kafnet::Result<()> {
    let sample = ImtsSample::new(
        0,
        vec![
            RawSeries::new(0, vec![(0.0, 1.0), (1.5, 2.0), (3.0, 1.5)])?,
            RawSeries::new(1, vec![(0.5, -1.0), (1.5, -0.5)])?,
            RawSeries::empty(2),
        ],
        vec![
            vec![Query::new(4.0, None)],
            vec![],
            vec![Query::new(4.5, None)],
        ],
    )?;
    let triplet = align(&sample)?;
    println!("grid {:?}", triplet.times());
    for n in 0..triplet.n_variates() {
        println!(
            "variate {n}: values {:?} mask {:?}",
            triplet.value_column(n),
            triplet.mask_column(n)
        );
    }
    // 0.0, 0.5, 1.5, 3.0: the shared time 1.5 appears once
    assert_eq!(triplet.grid_len(), 4);
    assert_eq!(triplet.observed_count(1), 2);
    let t_hat = normalize_times(&triplet, false);
    println!("normalized {:?}", t_hat.column(0));
    Ok(())
}

#[allow(dead_code)]
fn main() -> kafnet::Result<()> {
    run_example()
}
