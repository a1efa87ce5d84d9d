use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use proptest::prelude::*;
use squall::query::window::windows_for;
use squall::query::{
    assign_windows, col, filter, hash_join, hash_partition, lit, merge_final, partial_aggregate, project, sort,
    AggExpr, AggFunc, Field, RecordBatch, ScalarType, Schema, SchemaRef, SortKey, Value, WindowSpec,
};

fn schema() -> SchemaRef {
    Arc::new(
        Schema::new(vec![
            Field::new("k", ScalarType::Int64, false),
            Field::new("v", ScalarType::Int64, true),
            Field::new("s", ScalarType::Utf8, false),
            Field::new("ts", ScalarType::Timestamp, false),
        ])
        .unwrap(),
    )
}

type Row = (i64, Option<i64>, String, i64);

fn rows_strategy(max: usize) -> impl Strategy<Value = Vec<Row>> {
    prop::collection::vec(
        (0i64..20, prop::option::weighted(0.9, -1000i64..1000), "[a-e]{1,3}", 0i64..60_000),
        0..max,
    )
}

fn to_batch(rows: &[Row]) -> RecordBatch {
    let values: Vec<Vec<Value>> = rows
        .iter()
        .map(|(k, v, s, ts)| {
            vec![
                Value::Int64(*k),
                v.map(Value::Int64).unwrap_or(Value::Null),
                Value::Utf8(s.clone()),
                Value::Timestamp(*ts),
            ]
        })
        .collect();
    RecordBatch::from_rows(schema(), &values).unwrap()
}

fn sorted(mut rows: Vec<Vec<Value>>) -> Vec<Vec<Value>> {
    rows.sort();
    rows
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn filter_matches_row_scan(rows in rows_strategy(400), t in -1000i64..1000) {
        let b = to_batch(&rows);
        let out = filter(&b, &col("v").gt(lit(t)).and(col("k").modulo(lit(3i64)).not_eq(lit(0i64)))).unwrap();
        let want: Vec<Vec<Value>> = (0..b.num_rows())
            .filter(|&i| matches!(rows[i].1, Some(v) if v > t) && rows[i].0 % 3 != 0)
            .map(|i| b.row(i))
            .collect();
        prop_assert_eq!(out.rows(), want);
        prop_assert_eq!(out.schema(), b.schema());
    }

    #[test]
    fn project_recomputes_per_row(rows in rows_strategy(300)) {
        let b = to_batch(&rows);
        let out = project(&b, &[col("k").mul(lit(2i64)), col("s")], &["k2".into(), "s".into()]).unwrap();
        prop_assert_eq!(out.num_rows(), rows.len());
        for (i, r) in rows.iter().enumerate() {
            prop_assert_eq!(out.row(i), vec![Value::Int64(r.0 * 2), Value::Utf8(r.2.clone())]);
        }
    }

    #[test]
    fn partition_is_a_colocating_split(rows in rows_strategy(500), m in 1usize..9) {
        let b = to_batch(&rows);
        let parts = hash_partition(&b, &[col("s")], m).unwrap();
        prop_assert_eq!(parts.len(), m);
        let mut home: HashMap<Value, usize> = HashMap::new();
        let mut union = Vec::new();
        for (p, part) in parts.iter().enumerate() {
            for row in part.rows() {
                let prev = home.insert(row[2].clone(), p);
                prop_assert!(prev.is_none_or(|q| q == p));
                union.push(row);
            }
        }
        prop_assert_eq!(sorted(union), sorted(b.rows()));
        prop_assert_eq!(hash_partition(&b, &[col("s")], m).unwrap(), parts);
    }

    #[test]
    fn partial_then_final_equals_one_pass(
        rows in rows_strategy(500),
        cuts in prop::collection::vec(0usize..500, 0..5),
    ) {
        let b = to_batch(&rows);
        let groups = vec![(col("k"), "k".to_string())];
        let aggs = vec![
            AggExpr::new(AggFunc::Count, col("v"), "n"),
            AggExpr::new(AggFunc::Sum, col("v"), "sum"),
            AggExpr::new(AggFunc::Min, col("v"), "lo"),
            AggExpr::new(AggFunc::Max, col("v"), "hi"),
            AggExpr::new(AggFunc::Avg, col("v"), "avg"),
        ];
        let mut bounds: Vec<usize> = cuts.into_iter().map(|c| c.min(rows.len())).collect();
        bounds.push(0);
        bounds.push(rows.len());
        bounds.sort();
        let states: Vec<_> = bounds
            .windows(2)
            .map(|w| partial_aggregate(&b.slice(w[0], w[1] - w[0]), &groups, &aggs).unwrap())
            .collect();
        let split = merge_final(&states).unwrap();
        let once = merge_final(&[partial_aggregate(&b, &groups, &aggs).unwrap()]).unwrap();
        prop_assert_eq!(&split, &once);

        // Row-at-a-time reference.
        let mut want: BTreeMap<i64, Vec<i64>> = BTreeMap::new();
        for r in &rows {
            let e = want.entry(r.0).or_default();
            if let Some(v) = r.1 {
                e.push(v);
            }
        }
        prop_assert_eq!(split.num_rows(), want.len());
        for (i, (k, vs)) in want.iter().enumerate() {
            let row = split.row(i);
            prop_assert_eq!(&row[0], &Value::Int64(*k));
            prop_assert_eq!(&row[1], &Value::Int64(vs.len() as i64));
            if vs.is_empty() {
                prop_assert!(row[2..].iter().all(Value::is_null));
            } else {
                let sum: i64 = vs.iter().sum();
                prop_assert_eq!(&row[2], &Value::Int64(sum));
                prop_assert_eq!(&row[3], &Value::Int64(*vs.iter().min().unwrap()));
                prop_assert_eq!(&row[4], &Value::Int64(*vs.iter().max().unwrap()));
                prop_assert_eq!(&row[5], &Value::Float64(sum as f64 / vs.len() as f64));
            }
        }
    }

    #[test]
    fn join_matches_nested_loop(left in rows_strategy(120), right in rows_strategy(300), span in 0i64..30_000) {
        let l = to_batch(&left);
        let r = project(
            &to_batch(&right),
            &[col("k"), col("v"), col("ts")],
            &["rk".into(), "rv".into(), "rts".into()],
        )
        .unwrap();
        let residual = col("rts").between(col("ts"), col("ts").add(lit(span)));
        let out = hash_join(&l, &r, ("k", "rk"), Some(&residual)).unwrap();
        let mut want = Vec::new();
        for a in l.rows() {
            for b in r.rows() {
                let (Value::Timestamp(lt), Value::Timestamp(rt)) = (&a[3], &b[2]) else { unreachable!() };
                if a[0] == b[0] && *rt >= *lt && *rt <= lt + span {
                    want.push(a.iter().chain(b.iter()).cloned().collect::<Vec<_>>());
                }
            }
        }
        prop_assert_eq!(sorted(out.rows()), sorted(want));
    }

    #[test]
    fn sort_matches_stable_reference(rows in rows_strategy(500), asc in any::<bool>()) {
        let b = to_batch(&rows);
        let key = if asc { SortKey::asc("v") } else { SortKey::desc("v") };
        let out = sort(&b, &[SortKey::asc("s"), key]).unwrap();
        let mut idx: Vec<usize> = (0..rows.len()).collect();
        idx.sort_by(|&x, &y| {
            let by_v = rows[x].1.cmp(&rows[y].1);
            rows[x].2.cmp(&rows[y].2).then(if asc { by_v } else { by_v.reverse() })
        });
        let want: Vec<Vec<Value>> = idx.into_iter().map(|i| b.row(i)).collect();
        prop_assert_eq!(out.rows(), want);
    }

    #[test]
    fn tumbling_windows_partition_rows(rows in rows_strategy(400), size in 1i64..20_000) {
        let b = to_batch(&rows);
        let ws = assign_windows(&b, "ts", &WindowSpec::tumbling(size)).unwrap();
        let total: usize = ws.iter().map(|(_, w)| w.num_rows()).sum();
        prop_assert_eq!(total, rows.len());
        for (id, w) in &ws {
            prop_assert_eq!(id.end_ms - id.start_ms, size);
            prop_assert_eq!(id.start_ms.rem_euclid(size), 0);
            for row in w.rows() {
                let Value::Timestamp(t) = row[3] else { unreachable!() };
                prop_assert!(id.contains(t));
            }
        }
    }

    #[test]
    fn sliding_windows_cover_every_candidate(ts in -100_000i64..100_000, slide in 1i64..5000, mult in 1i64..6, extra in 0i64..5000) {
        let size = (slide * mult + extra).max(slide);
        let spec = WindowSpec::sliding(size, slide);
        let ws = windows_for(ts, &spec);
        let brute: Vec<i64> = ((ts - size) / slide - 2..=ts / slide + 2)
            .map(|k| k * slide)
            .filter(|&s| s <= ts && ts < s + size)
            .collect();
        prop_assert_eq!(ws.iter().map(|w| w.start_ms).collect::<Vec<_>>(), brute);
        let n = ws.len() as i64;
        prop_assert!(n == size / slide || n == (size + slide - 1) / slide);
    }
}

#[test]
fn window_examples() {
    let ids = |ts, spec: &WindowSpec| windows_for(ts, spec).iter().map(|w| (w.start_ms, w.end_ms)).collect::<Vec<_>>();
    assert_eq!(ids(25_000, &WindowSpec::tumbling(10_000)), vec![(20_000, 30_000)]);
    assert_eq!(
        ids(12_000, &WindowSpec::sliding(10_000, 5_000)),
        vec![(5_000, 15_000), (10_000, 20_000)]
    );
}

#[test]
fn filter_examples() {
    let rows: Vec<Row> = [5, 15, 25].iter().map(|&p| (1, Some(p), "a".to_string(), 0)).collect();
    let out = filter(&to_batch(&rows), &col("v").gt(lit(10i64))).unwrap();
    let prices: Vec<Value> = out.rows().into_iter().map(|r| r[1].clone()).collect();
    assert_eq!(prices, vec![Value::Int64(15), Value::Int64(25)]);
    assert!(filter(&to_batch(&rows), &col("nope").gt(lit(1i64))).is_err());
    assert!(filter(&to_batch(&rows), &col("k")).is_err());
}
