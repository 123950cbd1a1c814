use chrono::Days;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::config::{AbroadModel, CountryProfile, SimConfig};
use super::truth::{PlantedEffect, SimTruth};
use crate::drdid::IncomeGroup;
use crate::error::Result;
use crate::numerics::{derive_seed, RngStream};
use crate::panel::{income_quintiles, Country, Gender, HouseholdProfile, PurchaseRecord};
use crate::quarter::{Quarter, STANDARD_QUARTER_DAYS};

pub const AGE_BANDS: [&str; 4] = ["18-34", "35-49", "50-64", "65+"];
pub const ISCED_LEVELS: [&str; 4] = ["2", "3", "5", "6"];

/// Purchase and household tables in the panel module's shapes, plus truth.
#[derive(Clone, Debug)]
pub struct SimOutput {
    pub purchases: Vec<PurchaseRecord>,
    pub households: Vec<HouseholdProfile>,
    pub truth: SimTruth,
}

/// Planted profile over `grid`: `tax` in tax quarters, `post` after the tax,
/// `bump` in 2011Q3 and zero elsewhere.
///
/// With `balance`, the first post-tax quarter of each calendar season
/// absorbs the difference between that season's total and the median
/// season total, so every season carries the same mean effect.
pub fn effect_profile(grid: &[Quarter], tax: f64, post: f64, bump: f64, balance: bool) -> Vec<f64> {
    let bump_q = Quarter::TAX_START.offset(-1);
    let mut profile: Vec<f64> = grid
        .iter()
        .map(|&q| {
            if q.is_tax() {
                tax
            } else if q > Quarter::TAX_END {
                post
            } else if q == bump_q {
                bump
            } else {
                0.0
            }
        })
        .collect();
    if balance {
        let mut totals = [0.0; 4];
        for (v, q) in profile.iter().zip(grid) {
            totals[q.season()] += v;
        }
        let mut sorted = totals;
        sorted.sort_by(f64::total_cmp);
        let target = 0.5 * (sorted[1] + sorted[2]);
        for (s, total) in totals.iter().enumerate() {
            let gap = target - total;
            if gap == 0.0 {
                continue;
            }
            match grid.iter().position(|q| *q > Quarter::TAX_END && q.season() == s) {
                Some(i) => profile[i] += gap,
                None => log::warn!("no post-tax quarter for season {} in the grid; profile left unbalanced", s + 1),
            }
        }
    }
    profile
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample::<f64, _>(StandardNormal)
}

fn categorical(rng: &mut ChaCha8Rng, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Region of a household from its distance to the border.
pub fn region_for(country: Country, distance_km: f64) -> &'static str {
    match country {
        Country::DK if distance_km < 80.0 => "South/West Jutland",
        Country::DK if distance_km < 160.0 => "Funen",
        Country::DK if distance_km < 250.0 => "Zealand/Capital",
        Country::DK => "North/East Jutland",
        Country::DE if distance_km < 100.0 => "Schleswig-Holstein",
        Country::DE => "Hamburg",
    }
}

struct Drawn {
    profile: HouseholdProfile,
    trend_load: f64,
    purchaser: bool,
}

fn draw_profile(config: &SimConfig, country: Country, cp: &CountryProfile, id: String, rng: &mut ChaCha8Rng) -> Drawn {
    let age = categorical(rng, &cp.age_probs);
    let isced = categorical(rng, &cp.isced_probs);
    let female = rng.random::<f64>() < cp.female_share;
    let children = (0..3).filter(|_| rng.random::<f64>() < cp.child_prob).count() as u32;
    let adults = 1 + u32::from(rng.random::<f64>() < cp.two_adult_share);
    let income = cp.income_median * (cp.income_log_sd * normal(rng)).exp();
    let distance = cp.distance_km.0 + (cp.distance_km.1 - cp.distance_km.0) * rng.random::<f64>();
    let purchaser = rng.random::<f64>() >= config.never_purchaser_share;
    let size = children + adults;
    let t = &config.trend;
    let trend_load = if config.covariate_trends {
        t.children * children as f64
            + t.household_size * size as f64
            + t.female * f64::from(u8::from(female))
            + if age > 0 { t.age[age - 1] } else { 0.0 }
    } else {
        0.0
    };
    let profile = HouseholdProfile {
        household_id: id,
        country,
        region: region_for(country, distance).to_string(),
        head_age_band: Some(AGE_BANDS[age].to_string()),
        n_children_under_15: Some(children),
        diary_keeper_gender: Some(if female { Gender::Female } else { Gender::Male }),
        isced: Some(ISCED_LEVELS[isced].to_string()),
        income_midpoint: Some(income),
        income_level: None,
        household_size: Some(size),
        distance_km: Some(distance),
        profile_year: 2010,
    };
    Drawn { profile, trend_load, purchaser }
}

struct Profiles {
    weight: Vec<f64>,
    price: Vec<f64>,
    spillover: Vec<f64>,
    quarter_factor: Vec<f64>,
}

#[allow(clippy::too_many_arguments)]
fn household_records(
    config: &SimConfig,
    grid: &[Quarter],
    profiles: &Profiles,
    drawn: &Drawn,
    multiplier: f64,
    product: &str,
    rng: &mut ChaCha8Rng,
) -> Vec<PurchaseRecord> {
    let p = &drawn.profile;
    let cp = match p.country {
        Country::DK => &config.dk,
        Country::DE => &config.de,
    };
    let treated = p.country == Country::DK;
    let distance = p.distance_km.unwrap_or(0.0);
    let border = distance < config.border_km;
    let alpha = config.household_sd * normal(rng);
    let alpha_price = config.price_household_sd * normal(rng);
    let z_abroad = normal(rng);
    let mut out = Vec::with_capacity(2 * grid.len());
    for (qi, &q) in grid.iter().enumerate() {
        let (z_y, z_p, z_s) = (normal(rng), normal(rng), normal(rng));
        let s = q.season();
        let mut y = cp.baseline + cp.seasonal[s] + (q.year() - 2009) as f64 * drawn.trend_load + alpha + config.noise_sd * z_y;
        let mut price = cp.price + cp.price_seasonal[s] + alpha_price + config.price_noise_sd * z_p;
        if treated {
            y += multiplier * profiles.weight[qi];
            price += profiles.price[qi];
        } else if border {
            price += profiles.spillover[qi];
        }
        let price = price.max(1.0);
        let total = y.max(0.0) * q.days() as f64 / STANDARD_QUARTER_DAYS;
        let share = if treated {
            match &config.abroad {
                AbroadModel::Logistic { pre_share, tax_share, midpoint_km, width_km, household_log_sd, .. } => {
                    let base = if q.is_tax() { *tax_share } else { *pre_share };
                    let curve = 1.0 / (1.0 + ((distance - midpoint_km) / width_km).exp());
                    let hh = (household_log_sd * z_abroad - 0.5 * household_log_sd * household_log_sd).exp();
                    (base * curve * hh * profiles.quarter_factor[qi]).min(1.0)
                }
                AbroadModel::Quadratic { coefficients: b, household_sd, noise_sd } => {
                    let tax = f64::from(u8::from(q.is_tax()));
                    let d = distance;
                    let mean = b[0] + b[1] * d + b[2] * d * d + tax * (b[3] + b[4] * d + b[5] * d * d);
                    (mean + household_sd * z_abroad + noise_sd * z_s).clamp(0.0, 1.0)
                }
            }
        } else {
            0.0
        };
        let first = q.first_day();
        for (w, abroad, day) in [((1.0 - share) * total, false, 10), (share * total, true, 40)] {
            if w <= 0.0 {
                continue;
            }
            out.push(PurchaseRecord {
                household_id: p.household_id.clone(),
                country: p.country,
                date: first + Days::new(day),
                product: product.to_string(),
                weight: w,
                packages: ((w / cp.package_size).round() as u32).max(1),
                expenditure: price * w / 100.0,
                abroad,
            });
        }
    }
    out
}

/// Draw one synthetic panel.
///
/// Every household has its own random streams keyed by `(seed, country,
/// index)`, so results do not depend on thread count.
pub fn simulate_panel(config: &SimConfig, seed: u64) -> Result<SimOutput> {
    config.validate()?;
    let grid = config.grid();
    let mut drawn = Vec::with_capacity(config.n_dk + config.n_de);
    for (country, n, cp) in [(Country::DE, config.n_de, &config.de), (Country::DK, config.n_dk, &config.dk)] {
        let base = derive_seed(seed, &format!("sim-profile-{country}"));
        let width = n.to_string().len().max(5);
        for i in 0..n {
            let mut rng = RngStream::new(base, i as u64).rng();
            drawn.push(draw_profile(config, country, cp, format!("{country}{i:0width$}"), &mut rng));
        }
    }
    let mut profiles: Vec<HouseholdProfile> = drawn.iter().map(|d| d.profile.clone()).collect();
    income_quintiles(&mut profiles);
    for (d, p) in drawn.iter_mut().zip(&profiles) {
        d.profile.income_level = p.income_level;
    }

    let mut quarter_rng = RngStream::new(derive_seed(seed, "sim-quarter"), 0).rng();
    let quarter_log_sd = match config.abroad {
        AbroadModel::Logistic { quarter_log_sd, .. } => quarter_log_sd,
        AbroadModel::Quadratic { .. } => 0.0,
    };
    let quarter_factor = grid
        .iter()
        .map(|_| (quarter_log_sd * normal(&mut quarter_rng) - 0.5 * quarter_log_sd * quarter_log_sd).exp())
        .collect();
    let effects = Profiles {
        weight: effect_profile(&grid, config.att_tax, config.att_post, config.anticipation_bump, config.balance_seasons),
        price: effect_profile(&grid, config.pass_through, 0.0, 0.0, config.balance_seasons),
        spillover: effect_profile(&grid, config.border_spillover, 0.0, 0.0, config.balance_seasons),
        quarter_factor,
    };

    let multiplier = |d: &Drawn| -> f64 {
        if d.profile.country != Country::DK {
            return 0.0;
        }
        let income = d.profile.income_level.map(IncomeGroup::of).map_or(1.0, |g| match g {
            IncomeGroup::Low => config.income_multipliers[0],
            IncomeGroup::Medium => config.income_multipliers[1],
            IncomeGroup::High => config.income_multipliers[2],
        });
        let border = if d.profile.distance_km.unwrap_or(f64::INFINITY) < config.border_km { config.border_multiplier } else { 1.0 };
        income * border
    };

    let decoy = format!("not-{}", config.product);
    let outcome_seeds = [derive_seed(seed, "sim-outcome-DE"), derive_seed(seed, "sim-outcome-DK")];
    let purchases: Vec<PurchaseRecord> = drawn
        .par_iter()
        .enumerate()
        .map(|(k, d)| {
            let (stream, index) = match d.profile.country {
                Country::DE => (outcome_seeds[0], k),
                Country::DK => (outcome_seeds[1], k - config.n_de),
            };
            let mut rng = RngStream::new(stream, index as u64).rng();
            let product = if d.purchaser { config.product.as_str() } else { decoy.as_str() };
            household_records(config, &grid, &effects, d, multiplier(d), product, &mut rng)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();

    let purchasers = || drawn.iter().filter(|d| d.purchaser);
    let mean_load = |c: Country| {
        let v: Vec<f64> = purchasers().filter(|d| d.profile.country == c).map(|d| d.trend_load).collect();
        v.iter().sum::<f64>() / v.len().max(1) as f64
    };
    let treated: Vec<&Drawn> = purchasers().filter(|d| d.profile.country == Country::DK).collect();
    let with_unit = |profile: Vec<f64>| PlantedEffect {
        profile,
        multipliers: treated.iter().map(|d| (d.profile.household_id.clone(), 1.0)).collect(),
    };
    let truth = SimTruth {
        quarters: grid.clone(),
        reference: config.reference,
        weight: PlantedEffect {
            profile: effects.weight.clone(),
            multipliers: treated.iter().map(|d| (d.profile.household_id.clone(), multiplier(d))).collect(),
        },
        price: with_unit(effects.price.clone()),
        spillover: PlantedEffect {
            profile: effects.spillover.clone(),
            multipliers: purchasers()
                .filter(|d| d.profile.country == Country::DE && d.profile.distance_km.is_some_and(|x| x < config.border_km))
                .map(|d| (d.profile.household_id.clone(), 1.0))
                .collect(),
        },
        border_km: config.border_km,
        trend_gap: mean_load(Country::DK) - mean_load(Country::DE),
        abroad: config.abroad.clone(),
        income_groups: treated
            .iter()
            .map(|d| (d.profile.household_id.clone(), d.profile.income_level.map(IncomeGroup::of).unwrap_or(IncomeGroup::Medium).as_str()))
            .collect(),
    };
    let households = drawn.into_iter().map(|d| d.profile).map(|mut p| {
        p.income_level = None;
        p
    });
    Ok(SimOutput { purchases, households: households.collect(), truth })
}
