use criterion::{criterion_group, criterion_main, Criterion};
use sqlward_core::fixtures::pets;
use sqlward_core::parser::{parse_feed, ParseState};

fn feed_latency(c: &mut Criterion) {
    let schema = pets();
    let text = "select count(*), people.name from people join pet as t1 \
                on people.id = t1.owner_id where people.age > 20 \
                group by people.name order by count(*) desc limit 5";
    let pieces: Vec<&str> = text.split_inclusive(' ').collect();

    c.bench_function("parse_feed full query, guards on", |b| {
        b.iter(|| {
            let mut state = ParseState::new(true);
            for piece in &pieces {
                state = match parse_feed(&state, &schema, piece) {
                    sqlward_core::ParseOutcome::Accept(s) => s,
                    other => panic!("unexpected {other:?}"),
                };
            }
            state
        })
    });
}

criterion_group!(benches, feed_latency);
criterion_main!(benches);
