//! Deterministic NSL-KDD-format traffic generator.
//!
//! Produces text in the same 43-field layout as `KDDTrain+.txt` and
//! `KDDTest+.txt` so the whole pipeline can run without the real files.
//! Each record is drawn from a per-attack archetype (protocol, service,
//! flag, byte volumes, host/service traffic rates). Archetypes are shared
//! between the train and test flavours; only the category mixture differs.
//! A small fraction of rows borrows another category's archetype while
//! keeping its own label, so the task is not perfectly separable.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};

/// Rows per category: normal, DoS, Probe, R2L, U2R.
pub type CategoryCounts = [usize; 5];

/// Category mixture of the NSL-KDD training file.
pub const TRAIN_MIX: CategoryCounts = [67_343, 45_927, 11_656, 995, 52];
/// Category mixture of the NSL-KDD test file.
pub const TEST_MIX: CategoryCounts = [9_711, 7_458, 2_421, 2_754, 200];

/// Fraction of rows generated from a different category's archetype.
pub const CONFUSION_RATE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Category {
    Normal,
    Dos,
    Probe,
    R2l,
    U2r,
}

const CATEGORIES: [Category; 5] = [
    Category::Normal,
    Category::Dos,
    Category::Probe,
    Category::R2l,
    Category::U2r,
];

/// Mutable 41-column record under construction.
struct Conn {
    values: [f64; 41],
    protocol: &'static str,
    service: &'static str,
    flag: &'static str,
}

// raw column indices
const DURATION: usize = 0;
const SRC_BYTES: usize = 4;
const DST_BYTES: usize = 5;
const WRONG_FRAGMENT: usize = 7;
const HOT: usize = 9;
const FAILED_LOGINS: usize = 10;
const LOGGED_IN: usize = 11;
const NUM_COMPROMISED: usize = 12;
const ROOT_SHELL: usize = 13;
const NUM_ROOT: usize = 15;
const FILE_CREATIONS: usize = 16;
const NUM_SHELLS: usize = 17;
const ACCESS_FILES: usize = 18;
const IS_GUEST: usize = 21;
const COUNT: usize = 22;
const SRV_COUNT: usize = 23;
const SERROR: usize = 24;
const SRV_SERROR: usize = 25;
const RERROR: usize = 26;
const SRV_RERROR: usize = 27;
const SAME_SRV: usize = 28;
const DIFF_SRV: usize = 29;
const SRV_DIFF_HOST: usize = 30;
const DH_COUNT: usize = 31;
const DH_SRV_COUNT: usize = 32;
const DH_SAME_SRV: usize = 33;
const DH_DIFF_SRV: usize = 34;
const DH_SAME_SRC_PORT: usize = 35;
const DH_SRV_DIFF_HOST: usize = 36;
const DH_SERROR: usize = 37;
const DH_SRV_SERROR: usize = 38;
const DH_RERROR: usize = 39;
const DH_SRV_RERROR: usize = 40;

fn conn(protocol: &'static str, service: &'static str, flag: &'static str) -> Conn {
    Conn {
        values: [0.0; 41],
        protocol,
        service,
        flag,
    }
}

struct Gen {
    rng: ChaCha8Rng,
}

impl Gen {
    fn unit(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    fn int(&mut self, lo: u32, hi: u32) -> f64 {
        f64::from(self.rng.random_range(lo..=hi))
    }

    fn chance(&mut self, p: f64) -> bool {
        self.unit() < p
    }

    /// Rate near `center`, jittered by ±`spread`, clamped and rounded to 2dp.
    fn rate(&mut self, center: f64, spread: f64) -> f64 {
        let v = center + (self.unit() * 2.0 - 1.0) * spread;
        (v.clamp(0.0, 1.0) * 100.0).round() / 100.0
    }

    fn bytes(&mut self, median: f64, sigma: f64) -> f64 {
        LogNormal::new(median.ln(), sigma)
            .expect("finite lognormal parameters")
            .sample(&mut self.rng)
            .round()
    }

    fn pick<T: Copy>(&mut self, items: &[(T, f64)]) -> T {
        let total: f64 = items.iter().map(|(_, w)| w).sum();
        let mut u = self.unit() * total;
        for &(item, w) in items {
            if u < w {
                return item;
            }
            u -= w;
        }
        items[items.len() - 1].0
    }

    /// Host-level traffic statistics typical of benign sessions.
    fn benign_host_stats(&mut self, c: &mut Conn) {
        c.values[COUNT] = self.int(1, 25);
        c.values[SRV_COUNT] = (c.values[COUNT] + self.int(0, 10)).min(511.0);
        c.values[SAME_SRV] = self.rate(0.95, 0.08);
        c.values[DIFF_SRV] = self.rate(0.03, 0.05);
        c.values[SRV_DIFF_HOST] = self.rate(0.1, 0.15);
        c.values[DH_COUNT] = self.int(5, 255);
        c.values[DH_SRV_COUNT] = self.int(100, 255);
        c.values[DH_SAME_SRV] = self.rate(0.9, 0.12);
        c.values[DH_DIFF_SRV] = self.rate(0.03, 0.04);
        c.values[DH_SAME_SRC_PORT] = self.rate(0.05, 0.08);
        c.values[DH_SRV_DIFF_HOST] = self.rate(0.03, 0.04);
        c.values[DH_SERROR] = self.rate(0.0, 0.02);
        c.values[DH_RERROR] = self.rate(0.0, 0.03);
    }

    fn normal(&mut self) -> (Conn, &'static str) {
        let kind = self.pick(&[(0, 0.55), (1, 0.1), (2, 0.12), (3, 0.1), (4, 0.05), (5, 0.08)]);
        let mut c = match kind {
            0 => {
                let mut c = conn("tcp", "http", "SF");
                c.values[SRC_BYTES] = self.bytes(230.0, 0.5);
                c.values[DST_BYTES] = self.bytes(2000.0, 1.2);
                c.values[LOGGED_IN] = 1.0;
                c
            }
            1 => {
                let mut c = conn("tcp", "smtp", "SF");
                c.values[DURATION] = self.int(0, 3);
                c.values[SRC_BYTES] = self.bytes(1000.0, 0.8);
                c.values[DST_BYTES] = self.bytes(330.0, 0.3);
                c.values[LOGGED_IN] = 1.0;
                c
            }
            2 => {
                let svc = self.pick(&[("domain_u", 0.8), ("ntp_u", 0.1), ("other", 0.1)]);
                let mut c = conn("udp", svc, "SF");
                c.values[SRC_BYTES] = self.bytes(45.0, 0.3);
                c.values[DST_BYTES] = self.bytes(90.0, 0.5);
                c
            }
            3 => {
                let mut c = conn("tcp", "ftp_data", "SF");
                c.values[SRC_BYTES] = self.bytes(1500.0, 1.5);
                c.values[DST_BYTES] = if self.chance(0.7) { 0.0 } else { self.bytes(500.0, 1.0) };
                c.values[LOGGED_IN] = 1.0;
                c
            }
            4 => {
                let svc = self.pick(&[("eco_i", 0.4), ("ecr_i", 0.4), ("urp_i", 0.2)]);
                let mut c = conn("icmp", svc, "SF");
                c.values[SRC_BYTES] = self.bytes(40.0, 0.4);
                c
            }
            _ => {
                let svc = self.pick(&[("private", 0.4), ("telnet", 0.2), ("ftp", 0.2), ("ssh", 0.2)]);
                let flag = self.pick(&[("SF", 0.85), ("REJ", 0.05), ("RSTO", 0.05), ("S1", 0.05)]);
                let mut c = conn("tcp", svc, flag);
                c.values[DURATION] = self.bytes(20.0, 1.5);
                c.values[SRC_BYTES] = self.bytes(300.0, 1.0);
                c.values[DST_BYTES] = self.bytes(800.0, 1.2);
                c.values[LOGGED_IN] = 1.0;
                c.values[HOT] = if self.chance(0.1) { self.int(1, 3) } else { 0.0 };
                c
            }
        };
        self.benign_host_stats(&mut c);
        (c, "normal")
    }

    fn dos(&mut self) -> (Conn, &'static str) {
        let kind = self.pick(&[
            ("neptune", 0.895),
            ("smurf", 0.058),
            ("back", 0.021),
            ("teardrop", 0.02),
            ("pod", 0.006),
        ]);
        let c = match kind {
            "neptune" => {
                let svc = self.pick(&[("private", 0.5), ("http", 0.05), ("telnet", 0.05), ("ftp_data", 0.05),
                    ("finger", 0.05), ("other", 0.1), ("uucp", 0.05), ("ctf", 0.05), ("sunrpc", 0.05), ("csnet_ns", 0.05)]);
                let flag = self.pick(&[("S0", 0.85), ("REJ", 0.12), ("RSTO", 0.03)]);
                let mut c = conn("tcp", svc, flag);
                c.values[COUNT] = self.int(80, 511);
                c.values[SRV_COUNT] = self.int(1, 30);
                let syn = flag == "S0";
                let s = if syn { self.rate(0.98, 0.05) } else { self.rate(0.02, 0.05) };
                c.values[SERROR] = s;
                c.values[SRV_SERROR] = s;
                c.values[RERROR] = 1.0 - s;
                c.values[SRV_RERROR] = 1.0 - s;
                c.values[SAME_SRV] = self.rate(0.05, 0.05);
                c.values[DIFF_SRV] = self.rate(0.07, 0.04);
                c.values[DH_COUNT] = 255.0;
                c.values[DH_SRV_COUNT] = self.int(1, 25);
                c.values[DH_SAME_SRV] = self.rate(0.05, 0.05);
                c.values[DH_DIFF_SRV] = self.rate(0.07, 0.04);
                c.values[DH_SERROR] = s;
                c.values[DH_SRV_SERROR] = s;
                c.values[DH_RERROR] = 1.0 - s;
                c.values[DH_SRV_RERROR] = 1.0 - s;
                c
            }
            "smurf" => {
                let mut c = conn("icmp", "ecr_i", "SF");
                c.values[SRC_BYTES] = if self.chance(0.6) { 1032.0 } else { 520.0 };
                c.values[COUNT] = self.int(300, 511);
                c.values[SRV_COUNT] = c.values[COUNT];
                c.values[SAME_SRV] = 1.0;
                c.values[DH_COUNT] = 255.0;
                c.values[DH_SRV_COUNT] = 255.0;
                c.values[DH_SAME_SRV] = 1.0;
                c.values[DH_SAME_SRC_PORT] = self.rate(0.95, 0.05);
                c
            }
            "back" => {
                let mut c = conn("tcp", "http", "SF");
                c.values[SRC_BYTES] = 54540.0;
                c.values[DST_BYTES] = self.bytes(8314.0, 0.05);
                c.values[HOT] = 2.0;
                c.values[LOGGED_IN] = 1.0;
                c.values[NUM_COMPROMISED] = 1.0;
                c.values[COUNT] = self.int(1, 10);
                c.values[SRV_COUNT] = self.int(1, 10);
                c.values[SAME_SRV] = 1.0;
                c.values[DH_COUNT] = self.int(50, 255);
                c.values[DH_SRV_COUNT] = self.int(50, 255);
                c.values[DH_SAME_SRV] = self.rate(0.95, 0.05);
                c
            }
            "teardrop" => {
                let mut c = conn("udp", "private", "SF");
                c.values[SRC_BYTES] = 28.0;
                c.values[WRONG_FRAGMENT] = 3.0;
                c.values[COUNT] = self.int(1, 100);
                c.values[SRV_COUNT] = c.values[COUNT];
                c.values[SAME_SRV] = 1.0;
                c.values[DH_COUNT] = 255.0;
                c.values[DH_SRV_COUNT] = self.int(1, 100);
                c.values[DH_SAME_SRV] = self.rate(0.3, 0.2);
                c.values[DH_SAME_SRC_PORT] = self.rate(0.3, 0.2);
                c
            }
            _ => {
                let mut c = conn("icmp", "ecr_i", "SF");
                c.values[SRC_BYTES] = 1480.0;
                c.values[WRONG_FRAGMENT] = 1.0;
                c.values[COUNT] = self.int(1, 5);
                c.values[SRV_COUNT] = c.values[COUNT];
                c.values[SAME_SRV] = 1.0;
                c.values[DH_COUNT] = self.int(1, 255);
                c.values[DH_SRV_COUNT] = self.int(1, 50);
                c.values[DH_SAME_SRV] = self.rate(0.5, 0.4);
                c.values[DH_SAME_SRC_PORT] = self.rate(0.5, 0.4);
                c
            }
        };
        (c, kind)
    }

    fn probe(&mut self) -> (Conn, &'static str) {
        let kind = self.pick(&[("satan", 0.31), ("ipsweep", 0.31), ("portsweep", 0.25), ("nmap", 0.13)]);
        let c = match kind {
            "satan" => {
                let svc = self.pick(&[("private", 0.3), ("other", 0.2), ("finger", 0.1), ("telnet", 0.1),
                    ("ftp", 0.1), ("http", 0.1), ("domain", 0.1)]);
                let flag = self.pick(&[("REJ", 0.5), ("SF", 0.2), ("S0", 0.15), ("RSTO", 0.15)]);
                let mut c = conn("tcp", svc, flag);
                c.values[SRC_BYTES] = if flag == "SF" { self.bytes(10.0, 1.0) } else { 0.0 };
                c.values[COUNT] = self.int(1, 200);
                c.values[SRV_COUNT] = self.int(1, 10);
                c.values[RERROR] = self.rate(0.6, 0.35);
                c.values[SRV_RERROR] = self.rate(0.6, 0.35);
                c.values[SAME_SRV] = self.rate(0.1, 0.1);
                c.values[DIFF_SRV] = self.rate(0.7, 0.25);
                c.values[DH_COUNT] = self.int(1, 255);
                c.values[DH_SRV_COUNT] = self.int(1, 10);
                c.values[DH_SAME_SRV] = self.rate(0.05, 0.05);
                c.values[DH_DIFF_SRV] = self.rate(0.6, 0.3);
                c.values[DH_RERROR] = self.rate(0.7, 0.3);
                c.values[DH_SRV_RERROR] = self.rate(0.7, 0.3);
                c
            }
            "ipsweep" => {
                let mut c = conn("icmp", if self.chance(0.9) { "eco_i" } else { "ecr_i" }, "SF");
                c.values[SRC_BYTES] = if self.chance(0.7) { 8.0 } else { 18.0 };
                c.values[COUNT] = self.int(1, 3);
                c.values[SRV_COUNT] = self.int(1, 40);
                c.values[SAME_SRV] = 1.0;
                c.values[SRV_DIFF_HOST] = self.rate(0.9, 0.1);
                c.values[DH_COUNT] = self.int(1, 255);
                c.values[DH_SRV_COUNT] = self.int(1, 100);
                c.values[DH_SAME_SRV] = self.rate(0.9, 0.1);
                c.values[DH_SAME_SRC_PORT] = self.rate(0.9, 0.1);
                c.values[DH_SRV_DIFF_HOST] = self.rate(0.6, 0.3);
                c
            }
            "portsweep" => {
                let flag = self.pick(&[("RSTR", 0.6), ("REJ", 0.3), ("SH", 0.1)]);
                let mut c = conn("tcp", "private", flag);
                c.values[DURATION] = if self.chance(0.2) { self.bytes(2000.0, 1.0) } else { 0.0 };
                c.values[COUNT] = self.int(1, 3);
                c.values[SRV_COUNT] = self.int(1, 3);
                c.values[RERROR] = self.rate(0.8, 0.2);
                c.values[SRV_RERROR] = self.rate(0.8, 0.2);
                c.values[SAME_SRV] = self.rate(0.5, 0.5);
                c.values[SRV_DIFF_HOST] = self.rate(0.5, 0.5);
                c.values[DH_COUNT] = self.int(1, 255);
                c.values[DH_SRV_COUNT] = self.int(1, 10);
                c.values[DH_SAME_SRV] = self.rate(0.05, 0.05);
                c.values[DH_DIFF_SRV] = self.rate(0.4, 0.3);
                c.values[DH_SAME_SRC_PORT] = self.rate(0.9, 0.1);
                c.values[DH_RERROR] = self.rate(0.8, 0.2);
                c.values[DH_SRV_RERROR] = self.rate(0.8, 0.2);
                c
            }
            _ => {
                let proto = self.pick(&[("tcp", 0.5), ("udp", 0.25), ("icmp", 0.25)]);
                let (svc, flag) = match proto {
                    "tcp" => ("private", if self.chance(0.5) { "SF" } else { "S0" }),
                    "udp" => ("private", "SF"),
                    _ => ("eco_i", "SF"),
                };
                let mut c = conn(proto, svc, flag);
                c.values[SRC_BYTES] = self.int(0, 20);
                c.values[COUNT] = self.int(1, 2);
                c.values[SRV_COUNT] = self.int(1, 20);
                c.values[SAME_SRV] = 1.0;
                c.values[SRV_DIFF_HOST] = self.rate(0.6, 0.4);
                c.values[DH_COUNT] = self.int(1, 255);
                c.values[DH_SRV_COUNT] = self.int(1, 30);
                c.values[DH_SAME_SRV] = self.rate(0.3, 0.3);
                c.values[DH_DIFF_SRV] = self.rate(0.1, 0.1);
                c.values[DH_SAME_SRC_PORT] = self.rate(0.8, 0.2);
                c.values[DH_SRV_DIFF_HOST] = self.rate(0.3, 0.3);
                c
            }
        };
        (c, kind)
    }

    fn r2l(&mut self) -> (Conn, &'static str) {
        let kind = self.pick(&[
            ("warezclient", 0.55),
            ("guess_passwd", 0.3),
            ("warezmaster", 0.07),
            ("imap", 0.04),
            ("ftp_write", 0.04),
        ]);
        let mut c = match kind {
            "warezclient" => {
                let mut c = conn("tcp", if self.chance(0.8) { "ftp_data" } else { "ftp" }, "SF");
                c.values[DURATION] = self.bytes(300.0, 1.5);
                c.values[SRC_BYTES] = self.bytes(300_000.0, 1.0);
                c.values[HOT] = self.int(0, 28);
                c.values[LOGGED_IN] = 1.0;
                c.values[IS_GUEST] = if self.chance(0.5) { 1.0 } else { 0.0 };
                c
            }
            "guess_passwd" => {
                let mut c = conn("tcp", "telnet", if self.chance(0.8) { "RSTO" } else { "SF" });
                c.values[DURATION] = self.int(1, 5);
                c.values[SRC_BYTES] = 125.0;
                c.values[DST_BYTES] = 179.0;
                c.values[FAILED_LOGINS] = 1.0;
                c.values[RERROR] = self.rate(0.5, 0.5);
                c.values[DH_RERROR] = self.rate(0.8, 0.2);
                c.values[DH_SRV_RERROR] = self.rate(0.8, 0.2);
                c
            }
            "warezmaster" => {
                let mut c = conn("tcp", "ftp", "SF");
                c.values[DURATION] = self.bytes(500.0, 1.5);
                c.values[SRC_BYTES] = self.bytes(200.0, 0.5);
                c.values[DST_BYTES] = self.bytes(5_000_000.0, 1.0);
                c.values[HOT] = self.int(0, 5);
                c.values[LOGGED_IN] = 1.0;
                c.values[IS_GUEST] = 1.0;
                c
            }
            "imap" => {
                let mut c = conn("tcp", "imap4", if self.chance(0.5) { "SH" } else { "SF" });
                c.values[SRC_BYTES] = self.bytes(1500.0, 1.0);
                c.values[DST_BYTES] = self.bytes(300.0, 1.0);
                c
            }
            _ => {
                let mut c = conn("tcp", if self.chance(0.5) { "ftp" } else { "login" }, "SF");
                c.values[DURATION] = self.int(0, 130);
                c.values[SRC_BYTES] = self.bytes(300.0, 0.8);
                c.values[DST_BYTES] = self.bytes(900.0, 1.0);
                c.values[HOT] = self.int(1, 6);
                c.values[LOGGED_IN] = 1.0;
                c.values[FILE_CREATIONS] = self.int(0, 2);
                c
            }
        };
        c.values[COUNT] = self.int(1, 10);
        c.values[SRV_COUNT] = self.int(1, 10);
        c.values[SAME_SRV] = self.rate(0.9, 0.1);
        c.values[DH_COUNT] = self.int(1, 100);
        c.values[DH_SRV_COUNT] = self.int(1, 100);
        c.values[DH_SAME_SRV] = self.rate(0.7, 0.3);
        c.values[DH_SAME_SRC_PORT] = self.rate(0.4, 0.4);
        c.values[DH_SRV_DIFF_HOST] = self.rate(0.05, 0.05);
        (c, kind)
    }

    fn u2r(&mut self) -> (Conn, &'static str) {
        let kind = self.pick(&[
            ("buffer_overflow", 0.58),
            ("rootkit", 0.19),
            ("loadmodule", 0.17),
            ("perl", 0.06),
        ]);
        let svc = self.pick(&[("telnet", 0.7), ("ftp_data", 0.2), ("login", 0.1)]);
        let mut c = conn("tcp", svc, "SF");
        c.values[DURATION] = self.bytes(150.0, 1.2);
        c.values[SRC_BYTES] = self.bytes(1500.0, 1.2);
        c.values[DST_BYTES] = self.bytes(5000.0, 1.2);
        c.values[HOT] = self.int(1, 6);
        c.values[LOGGED_IN] = 1.0;
        c.values[NUM_COMPROMISED] = self.int(0, 3);
        c.values[ROOT_SHELL] = if self.chance(0.7) { 1.0 } else { 0.0 };
        c.values[NUM_ROOT] = self.int(0, 5);
        c.values[FILE_CREATIONS] = self.int(0, 4);
        c.values[NUM_SHELLS] = self.int(0, 2);
        c.values[ACCESS_FILES] = self.int(0, 2);
        c.values[COUNT] = self.int(1, 3);
        c.values[SRV_COUNT] = self.int(1, 3);
        c.values[SAME_SRV] = 1.0;
        c.values[DH_COUNT] = self.int(1, 60);
        c.values[DH_SRV_COUNT] = self.int(1, 30);
        c.values[DH_SAME_SRV] = self.rate(0.5, 0.4);
        c.values[DH_SAME_SRC_PORT] = self.rate(0.2, 0.2);
        (c, kind)
    }

    fn archetype(&mut self, cat: Category) -> (Conn, &'static str) {
        match cat {
            Category::Normal => self.normal(),
            Category::Dos => self.dos(),
            Category::Probe => self.probe(),
            Category::R2l => self.r2l(),
            Category::U2r => self.u2r(),
        }
    }

    fn record(&mut self, cat: Category, out: &mut String) {
        let (conn, label) = if self.chance(CONFUSION_RATE) {
            let other = CATEGORIES[self.rng.random_range(0..CATEGORIES.len())];
            let (conn, _) = self.archetype(other);
            let (_, label) = self.archetype(cat);
            (conn, label)
        } else {
            self.archetype(cat)
        };
        let difficulty = self.int(5, 21);
        for (i, v) in conn.values.iter().enumerate() {
            match i {
                1 => out.push_str(conn.protocol),
                2 => out.push_str(conn.service),
                3 => out.push_str(conn.flag),
                _ if (24..=30).contains(&i) || i >= 33 => {
                    write!(out, "{v:.2}").unwrap();
                }
                _ => write!(out, "{v}").unwrap(),
            }
            out.push(',');
        }
        writeln!(out, "{label},{difficulty}").unwrap();
    }
}

/// Generates `counts[c]` rows per category, interleaved in a seeded order.
pub fn generate(counts: CategoryCounts, seed: u64) -> String {
    let mut gen = Gen {
        rng: ChaCha8Rng::seed_from_u64(seed),
    };
    let mut order: Vec<Category> = CATEGORIES
        .iter()
        .zip(counts)
        .flat_map(|(&c, n)| std::iter::repeat_n(c, n))
        .collect();
    rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut gen.rng);
    let mut out = String::with_capacity(order.len() * 160);
    for cat in order {
        gen.record(cat, &mut out);
    }
    out
}

/// Scales a mixture by `factor`, keeping at least one row per non-empty category.
pub fn scaled(counts: CategoryCounts, factor: f64) -> CategoryCounts {
    counts.map(|n| {
        if n == 0 {
            0
        } else {
            ((n as f64 * factor).round() as usize).max(1)
        }
    })
}
