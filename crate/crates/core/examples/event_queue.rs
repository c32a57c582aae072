//! The bare event queue: equal timestamps fire in insertion order and the
//! clock never runs backwards.

use tailsim::sim::{run_until, EventQueue, SimTime};

#[derive(Debug)]
enum Tick {
    Ping(u32),
    Pong(u32),
}

fn main() {
    let mut q = EventQueue::new();
    q.schedule(SimTime::from_micros(5), Tick::Ping(0)).unwrap();
    q.schedule(SimTime::from_micros(5), Tick::Pong(0)).unwrap();

    let summary = run_until(&mut q, SimTime::from_micros(40), |q, ev| {
        println!("{:>8} {:?}", q.now().to_string(), ev.payload);
        match ev.payload {
            Tick::Ping(n) if n < 3 => {
                q.schedule_in(SimTime::from_micros(10), Tick::Ping(n + 1));
            }
            Tick::Pong(n) if n < 3 => {
                q.schedule_in(SimTime::from_micros(10), Tick::Pong(n + 1));
            }
            _ => {}
        }
    });
    println!("{} events, clock {}", summary.events, summary.clock);
    assert!(q.schedule(SimTime::ZERO, Tick::Ping(9)).is_err());
}
