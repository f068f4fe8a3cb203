//! Synthetic evaluation datasets written as CSV.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand::distributions::{Alphanumeric, Distribution, Uniform};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analysis::PatternTable;

const FORENAMES: &str = include_str!("defaults/forenames.txt");
const SURNAMES: &str = include_str!("defaults/surnames.txt");

pub const NOISE_COLUMNS: [&str; 4] = ["user_name", "email", "address", "ip"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DatasetKind {
    Ipv4,
    FullNames,
    Handles,
    Noise,
}

impl DatasetKind {
    pub const ALL: [DatasetKind; 4] = [Self::Ipv4, Self::FullNames, Self::Handles, Self::Noise];

    pub fn header(self) -> &'static [&'static str] {
        match self {
            Self::Ipv4 => &["ip_v4"],
            Self::FullNames => &["full_name"],
            Self::Handles => &["screen_name"],
            Self::Noise => &NOISE_COLUMNS,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Ipv4 => "ipv4",
            Self::FullNames => "fullnames",
            Self::Handles => "handles",
            Self::Noise => "noise",
        }
    }
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DatasetKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown dataset kind '{s}' (expected ipv4, fullnames, handles or noise)"))
    }
}

fn lines(list: &str) -> Vec<&str> {
    list.lines().map(str::trim).filter(|l| !l.is_empty()).collect()
}

struct Generator {
    rng: ChaCha8Rng,
    forenames: Vec<&'static str>,
    surnames: Vec<&'static str>,
    patterns: PatternTable,
}

impl Generator {
    fn ipv4(&mut self) -> String {
        let octet = Uniform::new_inclusive(0u8, 255);
        let [a, b, c, d] = [0; 4].map(|_: u8| octet.sample(&mut self.rng));
        format!("{a}.{b}.{c}.{d}")
    }

    fn full_name(&mut self) -> String {
        let forename = self.forenames.choose(&mut self.rng).expect("forenames");
        let surname = self.surnames.choose(&mut self.rng).expect("surnames");
        format!("{forename} {surname}")
    }

    fn handle(&mut self) -> String {
        const CHARS: &[u8] = b"abcdefghijklmnopqrstuvwxyz0123456789_";
        let len = self.rng.gen_range(5..=15);
        // A leading letter keeps handles from looking numeric.
        let first = CHARS[self.rng.gen_range(0..26)] as char;
        std::iter::once(first)
            .chain((1..len).map(|_| CHARS[self.rng.gen_range(0..CHARS.len())] as char))
            .collect()
    }

    /// Alphanumeric string that no configured pattern matches.
    fn noise(&mut self) -> String {
        loop {
            let len = self.rng.gen_range(6..=16);
            let s: String = (&mut self.rng).sample_iter(Alphanumeric).take(len).map(char::from).collect();
            if !self.patterns.patterns().iter().any(|p| p.is_match(&s)) {
                return s;
            }
        }
    }

    fn row(&mut self, kind: DatasetKind) -> Vec<String> {
        match kind {
            DatasetKind::Ipv4 => vec![self.ipv4()],
            DatasetKind::FullNames => vec![self.full_name()],
            DatasetKind::Handles => vec![self.handle()],
            DatasetKind::Noise => (0..NOISE_COLUMNS.len()).map(|_| self.noise()).collect(),
        }
    }
}

/// Writes `rows` data rows plus a header. Output depends only on `(kind, rows, seed)`.
pub fn write_dataset(kind: DatasetKind, rows: usize, seed: u64, out: impl Write) -> csv::Result<()> {
    let mut generator = Generator {
        rng: ChaCha8Rng::seed_from_u64(seed),
        forenames: lines(FORENAMES),
        surnames: lines(SURNAMES),
        patterns: PatternTable::default(),
    };
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(kind.header())?;
    for _ in 0..rows {
        writer.write_record(generator.row(kind))?;
    }
    writer.flush()?;
    Ok(())
}

pub fn write_dataset_file(kind: DatasetKind, rows: usize, seed: u64, path: &Path) -> csv::Result<()> {
    let file = std::fs::File::create(path)?;
    write_dataset(kind, rows, seed, std::io::BufWriter::new(file))
}
