use crate::panel::{Country, IncomeLevel, PreparedPanel};

/// Households entering an estimation, each assigned to the treated or the
/// comparison arm. Indices refer to [`PreparedPanel::households`].
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub members: Vec<usize>,
    pub treated: Vec<bool>,
}

/// Income groups used for heterogeneity analysis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum IncomeGroup {
    Low,
    Medium,
    High,
}

impl IncomeGroup {
    pub const ALL: [IncomeGroup; 3] = [IncomeGroup::Low, IncomeGroup::Medium, IncomeGroup::High];

    pub fn of(level: IncomeLevel) -> IncomeGroup {
        match level {
            IncomeLevel::VeryLow | IncomeLevel::Low => IncomeGroup::Low,
            IncomeLevel::Medium => IncomeGroup::Medium,
            IncomeLevel::High | IncomeLevel::VeryHigh => IncomeGroup::High,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            IncomeGroup::Low => "low",
            IncomeGroup::Medium => "medium",
            IncomeGroup::High => "high",
        }
    }
}

impl Sample {
    /// Danish households against German ones.
    pub fn countries(panel: &PreparedPanel) -> Sample {
        let members: Vec<usize> = (0..panel.n_households()).collect();
        let treated = members.iter().map(|&h| panel.households[h].country == Country::DK).collect();
        Sample { members, treated }
    }

    /// Keep members for which `keep(household)` holds.
    pub fn filter(&self, mut keep: impl FnMut(usize) -> bool) -> Sample {
        let (members, treated) = self.members.iter().zip(&self.treated).filter(|(&h, _)| keep(h)).map(|(&h, &t)| (h, t)).unzip();
        Sample { members, treated }
    }

    /// Drop Danish households whose region is listed; controls stay.
    pub fn drop_regions(&self, panel: &PreparedPanel, regions: &[String]) -> Sample {
        self.filter(|h| {
            let p = &panel.households[h];
            !(p.country == Country::DK && regions.iter().any(|r| r.trim() == p.region))
        })
    }

    pub fn income_group(&self, panel: &PreparedPanel, group: IncomeGroup) -> Sample {
        self.filter(|h| panel.households[h].income_level.map(IncomeGroup::of) == Some(group))
    }

    pub fn n_treated(&self) -> usize {
        self.treated.iter().filter(|&&t| t).count()
    }

    pub fn n_control(&self) -> usize {
        self.treated.len() - self.n_treated()
    }

    /// Country shared by every member of an arm, if any.
    pub(crate) fn arm_country(&self, panel: &PreparedPanel, treated: bool) -> Option<Country> {
        let mut it = self.members.iter().zip(&self.treated).filter(|(_, &t)| t == treated).map(|(&h, _)| panel.households[h].country);
        let first = it.next()?;
        it.all(|c| c == first).then_some(first)
    }
}
