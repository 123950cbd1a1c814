//! Cross-border analyses.
//!
//! Households are bucketed by distance to the nearest German shop, the share
//! of the product bought abroad is tracked per bucket around the tax, and a
//! random-intercept model relates that share to distance with tax
//! interactions. Regional effects rerun the event study per Danish region
//! against all German households; the spillover estimate (ATN, the effect on
//! untaxed neighbours) compares German households near the border with
//! those further away.

mod buckets;
mod random_effects;
mod regional;

pub use buckets::{
    bucket_distances, default_edges, make_buckets, share_abroad_series, write_distance_buckets, write_share_abroad, BucketTable,
    DistanceBucket, Phase, ShareAbroadRow, DE_EDGES, DK_EDGES,
};
pub use random_effects::{random_effects_distance, write_re_model, ReCoefficient, ReModelFit, ReOptions, RE_TERMS};
pub use regional::{
    atn_estimate, atn_row, regional_att, regional_att_by, write_atn, write_regional_att, AtnResult, RegionalAtt, ATN_BORDER_KM,
    LOW_N_HOUSEHOLDS,
};
