//! Daily futures price series: CSV loading, the instrument catalog, a seeded
//! synthetic generator and the expanding walk-forward schedule.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Trading days per year used for every annualization in the crate.
pub const TRADING_DAYS: f64 = 252.0;

/// Shortest series from which a state can be assembled: one yearly lookback,
/// the 63-day MACD price window and one tradable day.
pub const MIN_SERIES_LEN: usize = 316;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AssetClass {
    Commodity,
    EquityIndex,
    FixedIncome,
    FX,
}

impl AssetClass {
    pub const ALL: [AssetClass; 4] = [
        AssetClass::Commodity,
        AssetClass::EquityIndex,
        AssetClass::FixedIncome,
        AssetClass::FX,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AssetClass::Commodity => "Commodity",
            AssetClass::EquityIndex => "EquityIndex",
            AssetClass::FixedIncome => "FixedIncome",
            AssetClass::FX => "FX",
        }
    }
}

impl fmt::Display for AssetClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AssetClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        match norm.as_str() {
            "commodity" | "commodities" | "comdty" => Ok(AssetClass::Commodity),
            "equityindex" | "equityindices" | "equityindexes" | "equity" => Ok(AssetClass::EquityIndex),
            "fixedincome" | "fixedincomes" | "rates" => Ok(AssetClass::FixedIncome),
            "fx" | "forex" | "currency" => Ok(AssetClass::FX),
            _ => Err(Error::Config(format!("unknown asset class `{s}`"))),
        }
    }
}

/// Dated daily closes of one continuous (ratio-adjusted) futures contract.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    ticker: String,
    asset_class: AssetClass,
    dates: Vec<NaiveDate>,
    closes: Vec<f64>,
}

impl PriceSeries {
    /// Validates that dates are strictly increasing and closes are finite and positive.
    pub fn new(
        ticker: impl Into<String>,
        asset_class: AssetClass,
        dates: Vec<NaiveDate>,
        closes: Vec<f64>,
    ) -> Result<Self> {
        let ticker = ticker.into();
        if dates.len() != closes.len() {
            return Err(Error::ShapeMismatch(format!(
                "{ticker}: {} dates vs {} closes",
                dates.len(),
                closes.len()
            )));
        }
        if let Some(w) = dates.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!(
                "{ticker}: dates not strictly increasing at {}",
                w[1]
            )));
        }
        if let Some((i, &c)) = closes.iter().enumerate().find(|(_, c)| !(c.is_finite() && **c > 0.0)) {
            return Err(Error::NonPositivePrice {
                path: ticker.clone().into(),
                row: i,
                value: c,
            });
        }
        Ok(PriceSeries {
            ticker,
            asset_class,
            dates,
            closes,
        })
    }

    pub fn ticker(&self) -> &str {
        &self.ticker
    }

    pub fn asset_class(&self) -> AssetClass {
        self.asset_class
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn closes(&self) -> &[f64] {
        &self.closes
    }

    pub fn len(&self) -> usize {
        self.closes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.closes.is_empty()
    }

    /// Copy of the series with every close multiplied by `k`.
    pub fn scaled(&self, k: f64) -> Result<PriceSeries> {
        PriceSeries::new(
            self.ticker.clone(),
            self.asset_class,
            self.dates.clone(),
            self.closes.iter().map(|c| c * k).collect(),
        )
    }

    /// Copy holding only observations dated strictly before `date`.
    pub fn truncated_before(&self, date: NaiveDate) -> PriceSeries {
        let n = self.dates.partition_point(|d| *d < date);
        PriceSeries {
            ticker: self.ticker.clone(),
            asset_class: self.asset_class,
            dates: self.dates[..n].to_vec(),
            closes: self.closes[..n].to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub ticker: String,
    pub description: String,
    pub asset_class: AssetClass,
}

/// Ticker metadata used to label CSV inputs with their asset class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstrumentCatalog {
    entries: Vec<CatalogEntry>,
}

const DEFAULT_CATALOG: &[(&str, &str, AssetClass)] = &[
    ("CC", "COCOA", AssetClass::Commodity),
    ("DA", ".MILK III, Comp", AssetClass::Commodity),
    ("GI", "GOLDMAN SAKS C. I.", AssetClass::Commodity),
    ("JO", "ORANGE JUICE", AssetClass::Commodity),
    ("KC", "COFFEE", AssetClass::Commodity),
    ("KW", "WHEAT, KC", AssetClass::Commodity),
    ("LB", "LUMBER", AssetClass::Commodity),
    ("NR", "ROUGH RICE", AssetClass::Commodity),
    ("SB", "SUGAR #11", AssetClass::Commodity),
    ("ZA", "PALLADIUM, Electronic", AssetClass::Commodity),
    ("ZC", "CORN, Electronic", AssetClass::Commodity),
    ("ZF", "FEEDER CATTLE, Electronic", AssetClass::Commodity),
    ("ZG", "GOLD, Electronic", AssetClass::Commodity),
    ("ZH", "HEATING OIL, Electronic", AssetClass::Commodity),
    ("ZI", "SILVER, Electronic", AssetClass::Commodity),
    ("ZK", "COPPER, Electronic", AssetClass::Commodity),
    ("ZL", "SOYBEAN OIL, Electronic", AssetClass::Commodity),
    ("ZN", "NATURAL GAS, Electronic", AssetClass::Commodity),
    ("ZO", "OATS, Electronic", AssetClass::Commodity),
    ("ZP", "PLATINUM, electronic", AssetClass::Commodity),
    ("ZR", "ROUGH RICE, Electronic", AssetClass::Commodity),
    ("ZT", "LIVE CATTLE, Electronic", AssetClass::Commodity),
    ("ZU", "CRUDE OIL, Electronic", AssetClass::Commodity),
    ("ZW", "WHEAT, Electronic", AssetClass::Commodity),
    ("ZZ", "LEAN HOGS, Electronic", AssetClass::Commodity),
    ("CA", "CAC40 INDEX", AssetClass::EquityIndex),
    ("EN", "NASDAQ, MINI", AssetClass::EquityIndex),
    ("ER", "RUSSELL 2000, MINI", AssetClass::EquityIndex),
    ("ES", "S & P 500, MINI", AssetClass::EquityIndex),
    ("LX", "FTSE 100 INDEX", AssetClass::EquityIndex),
    ("MD", "S&P 400 (Mini Electronic)", AssetClass::EquityIndex),
    ("SC", "S & P 500, Composite", AssetClass::EquityIndex),
    ("SP", "S & P 500, Day Session", AssetClass::EquityIndex),
    ("XU", "DOW JONES EUROSTOXX50", AssetClass::EquityIndex),
    ("XX", "DOW JONES STOXX 50", AssetClass::EquityIndex),
    ("YM", "Mini Dow Jones ($5.00)", AssetClass::EquityIndex),
    ("DT", "EURO BOND (BUND)", AssetClass::FixedIncome),
    ("FB", "T-NOTE, 5-year Composite", AssetClass::FixedIncome),
    ("TY", "T-NOTE, 10-year Composite", AssetClass::FixedIncome),
    ("UB", "EURO BOBL", AssetClass::FixedIncome),
    ("US", "T-BONDS, Composite", AssetClass::FixedIncome),
    ("AN", "AUSTRALIAN, Day Session", AssetClass::FX),
    ("BN", "BRITISH POUND, Composite", AssetClass::FX),
    ("CN", "CANADIAN, Composite", AssetClass::FX),
    ("DX", "US DOLLAR INDEX", AssetClass::FX),
    ("FN", "EURO, Composite", AssetClass::FX),
    ("JN", "JAPANESE YEN, Composite", AssetClass::FX),
    ("MP", "MEXICAN PESO", AssetClass::FX),
    ("NK", "NIKKEI INDEX", AssetClass::FX),
    ("SN", "SWISS FRANC, Composite", AssetClass::FX),
];

impl Default for InstrumentCatalog {
    /// The 50-contract universe: 25 commodities, 11 equity indices,
    /// 5 fixed income and 9 FX contracts.
    fn default() -> Self {
        InstrumentCatalog {
            entries: DEFAULT_CATALOG
                .iter()
                .map(|(t, d, c)| CatalogEntry {
                    ticker: t.to_string(),
                    description: d.to_string(),
                    asset_class: *c,
                })
                .collect(),
        }
    }
}

impl InstrumentCatalog {
    pub fn new(entries: Vec<CatalogEntry>) -> Result<Self> {
        let mut seen = HashSet::new();
        for e in &entries {
            if !seen.insert(e.ticker.as_str()) {
                return Err(Error::Config(format!("duplicate ticker `{}` in catalog", e.ticker)));
            }
        }
        Ok(InstrumentCatalog { entries })
    }

    pub fn empty() -> Self {
        InstrumentCatalog { entries: Vec::new() }
    }

    /// Reads a `ticker,description,asset_class` CSV.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path.as_ref())?;
        let mut entries = Vec::new();
        for rec in rdr.deserialize::<(String, String, String)>() {
            let (ticker, description, class) = rec?;
            entries.push(CatalogEntry {
                ticker,
                description,
                asset_class: class.parse()?,
            });
        }
        InstrumentCatalog::new(entries)
    }

    pub fn entries(&self) -> &[CatalogEntry] {
        &self.entries
    }

    pub fn get(&self, ticker: &str) -> Option<&CatalogEntry> {
        self.entries.iter().find(|e| e.ticker == ticker)
    }

    /// Adds or replaces an entry.
    pub fn insert(&mut self, entry: CatalogEntry) {
        match self.entries.iter_mut().find(|e| e.ticker == entry.ticker) {
            Some(e) => *e = entry,
            None => self.entries.push(entry),
        }
    }

    pub fn count(&self, class: AssetClass) -> usize {
        self.entries.iter().filter(|e| e.asset_class == class).count()
    }
}

/// Loads a `date,close[,ticker]` CSV. Extra columns are ignored. The ticker is
/// taken from a `ticker` column when present, else from the file stem; its
/// asset class comes from `catalog` unless `asset_class` overrides it.
pub fn load_csv(
    path: impl AsRef<Path>,
    catalog: &InstrumentCatalog,
    asset_class: Option<AssetClass>,
) -> Result<PriceSeries> {
    let path = path.as_ref();
    let malformed = |row: usize, reason: String| Error::MalformedRow {
        path: path.to_path_buf(),
        row,
        reason,
    };
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
    let date_col = col("date").ok_or_else(|| malformed(1, "missing `date` column".into()))?;
    let close_col = col("close").ok_or_else(|| malformed(1, "missing `close` column".into()))?;
    let ticker_col = col("ticker");

    let mut ticker: Option<String> = None;
    let mut rows: Vec<(NaiveDate, f64, usize)> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        // Line numbers are 1-based and count the header.
        let line = i + 2;
        let rec = rec.map_err(|e| malformed(line, e.to_string()))?;
        let field = |c: usize| rec.get(c).ok_or_else(|| malformed(line, "short row".into()));
        let date = NaiveDate::parse_from_str(field(date_col)?, "%Y-%m-%d")
            .map_err(|e| malformed(line, format!("bad date: {e}")))?;
        let close: f64 = field(close_col)?
            .parse()
            .map_err(|e| malformed(line, format!("bad close: {e}")))?;
        if !close.is_finite() {
            return Err(malformed(line, "non-finite close".into()));
        }
        if close <= 0.0 {
            return Err(Error::NonPositivePrice {
                path: path.to_path_buf(),
                row: line,
                value: close,
            });
        }
        if let Some(tc) = ticker_col {
            let t = field(tc)?;
            match &ticker {
                None => ticker = Some(t.to_string()),
                Some(prev) if prev != t => {
                    return Err(malformed(line, format!("mixed tickers `{prev}` and `{t}`")));
                }
                _ => {}
            }
        }
        rows.push((date, close, line));
    }

    rows.sort_by_key(|r| r.0);
    if let Some(w) = rows.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(Error::DuplicateDate {
            path: path.to_path_buf(),
            date: w[0].0,
        });
    }

    let ticker = match ticker {
        Some(t) => t,
        None => path
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| malformed(1, "cannot derive ticker from file name".into()))?
            .to_string(),
    };
    let asset_class = match (asset_class, catalog.get(&ticker)) {
        (Some(c), _) => c,
        (None, Some(e)) => e.asset_class,
        (None, None) => return Err(Error::UnknownTicker(ticker)),
    };
    let (dates, closes) = rows.into_iter().map(|(d, c, _)| (d, c)).unzip();
    PriceSeries::new(ticker, asset_class, dates, closes)
}

/// Writes `date,close,ticker`. Closes use the shortest round-trip decimal form.
pub fn write_csv(series: &PriceSeries, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["date", "close", "ticker"])?;
    for (d, c) in series.dates.iter().zip(&series.closes) {
        w.write_record([d.format("%Y-%m-%d").to_string(), c.to_string(), series.ticker.clone()])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftRegime {
    /// Regime length in trading days.
    pub length: usize,
    /// Annualized drift of log prices.
    pub drift: f64,
}

/// Parameters of a piecewise-constant-drift geometric Brownian path.
/// Regimes repeat cyclically until `n_days` closes have been produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub ticker: String,
    pub asset_class: AssetClass,
    pub n_days: usize,
    pub drift_regimes: Vec<DriftRegime>,
    pub annualized_vol: f64,
    pub start_price: f64,
    pub start_date: NaiveDate,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            ticker: "SYN".into(),
            asset_class: AssetClass::Commodity,
            n_days: 3780,
            drift_regimes: vec![DriftRegime {
                length: 252,
                drift: 0.0,
            }],
            annualized_vol: 0.15,
            start_price: 100.0,
            start_date: NaiveDate::from_ymd_opt(2005, 1, 3).expect("valid date"),
        }
    }
}

/// Weekday calendar of `n` trading days starting at the first weekday on or after `start`.
pub fn business_days(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(n);
    let mut d = start;
    while out.len() < n {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d += Duration::days(1);
    }
    out
}

/// Seeded GBM with piecewise-constant drift. Identical seeds give bit-identical paths.
pub fn generate_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<PriceSeries> {
    if spec.n_days < MIN_SERIES_LEN {
        return Err(Error::BadSpec(format!("n_days = {} < {MIN_SERIES_LEN}", spec.n_days)));
    }
    if !(spec.annualized_vol >= 0.0 && spec.annualized_vol.is_finite()) {
        return Err(Error::BadSpec(format!("annualized_vol = {}", spec.annualized_vol)));
    }
    if !(spec.start_price > 0.0 && spec.start_price.is_finite()) {
        return Err(Error::BadSpec(format!("start_price = {}", spec.start_price)));
    }
    if spec.drift_regimes.is_empty() {
        return Err(Error::BadSpec("no drift regimes".into()));
    }
    if let Some(r) = spec
        .drift_regimes
        .iter()
        .find(|r| r.length == 0 || !r.drift.is_finite())
    {
        return Err(Error::BadSpec(format!("bad regime {r:?}")));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dt = 1.0 / TRADING_DAYS;
    let vol = spec.annualized_vol;
    let regime_drifts = spec
        .drift_regimes
        .iter()
        .flat_map(|r| std::iter::repeat_n(r.drift, r.length))
        .cycle();

    let mut closes = Vec::with_capacity(spec.n_days);
    let mut log_p = 0.0;
    closes.push(spec.start_price);
    for drift in regime_drifts.take(spec.n_days - 1) {
        let z: f64 = StandardNormal.sample(&mut rng);
        log_p += (drift - 0.5 * vol * vol) * dt + vol * dt.sqrt() * z;
        closes.push(spec.start_price * log_p.exp());
    }
    PriceSeries::new(
        spec.ticker.clone(),
        spec.asset_class,
        business_days(spec.start_date, spec.n_days),
        closes,
    )
}

/// Inclusive calendar range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DateRange {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DateRange {
    pub fn contains(&self, d: NaiveDate) -> bool {
        self.start <= d && d <= self.end
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WalkForwardSplit {
    pub train: DateRange,
    pub test: DateRange,
}

fn jan1(year: i32) -> NaiveDate {
    NaiveDate::from_ymd_opt(year, 1, 1).expect("valid year")
}

/// Expanding-window schedule: every split trains from the first date through
/// the day before its test year, then tests for `retrain_interval_years`
/// calendar years (the last one truncated at the data end).
pub fn walk_forward_splits(
    dates: &[NaiveDate],
    retrain_interval_years: u32,
    first_test_year: i32,
) -> Result<Vec<WalkForwardSplit>> {
    if retrain_interval_years == 0 {
        return Err(Error::Config("retrain interval must be >= 1 year".into()));
    }
    let (Some(&first), Some(&last)) = (dates.first(), dates.last()) else {
        return Err(Error::InsufficientHistory("no dates".into()));
    };
    if first.year() >= first_test_year {
        return Err(Error::InsufficientHistory(format!(
            "data starts {first}, no training year before {first_test_year}"
        )));
    }
    if last < jan1(first_test_year) {
        return Err(Error::InsufficientHistory(format!(
            "data ends {last}, before the first test year {first_test_year}"
        )));
    }
    let mut splits = Vec::new();
    let mut year = first_test_year;
    while jan1(year) <= last {
        let next = year + retrain_interval_years as i32;
        let test_end = (jan1(next) - Duration::days(1)).min(last);
        splits.push(WalkForwardSplit {
            train: DateRange {
                start: first,
                end: jan1(year) - Duration::days(1),
            },
            test: DateRange {
                start: jan1(year),
                end: test_end,
            },
        });
        year = next;
    }
    Ok(splits)
}
