//! Two-dimensional resource accounting.
//!
//! Every demand, capacity and allocation in the simulator is a [`Resources`]
//! pair of vCores and MiB of memory. Fractions of the cluster (queue
//! capacities, dominant shares) are exact rationals so that argmin/argmax
//! selections never depend on float rounding.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign};

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An exact fraction in `[0, 1]` (or above, for ratios relative to a guarantee).
pub type Share = Ratio<u64>;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Resources {
    pub vcores: u64,
    pub memory_mb: u64,
}

impl Resources {
    pub const ZERO: Resources = Resources {
        vcores: 0,
        memory_mb: 0,
    };

    pub const fn new(vcores: u64, memory_mb: u64) -> Self {
        Resources { vcores, memory_mb }
    }

    /// Component-wise `self <= other`.
    pub fn fits_in(&self, other: &Resources) -> bool {
        self.vcores <= other.vcores && self.memory_mb <= other.memory_mb
    }

    pub fn is_zero(&self) -> bool {
        self.vcores == 0 && self.memory_mb == 0
    }

    /// Component-wise difference; fails if either component would go negative.
    pub fn checked_sub(self, rhs: Resources) -> Result<Resources> {
        match (
            self.vcores.checked_sub(rhs.vcores),
            self.memory_mb.checked_sub(rhs.memory_mb),
        ) {
            (Some(vcores), Some(memory_mb)) => Ok(Resources { vcores, memory_mb }),
            _ => Err(Error::Accounting(format!("cannot subtract {rhs} from {self}"))),
        }
    }

    /// `floor(fraction * self)` on each component.
    pub fn scale_floor(self, fraction: Share) -> Resources {
        let scale = |x: u64| -> u64 {
            let v = x as u128 * *fraction.numer() as u128 / *fraction.denom() as u128;
            v as u64
        };
        Resources {
            vcores: scale(self.vcores),
            memory_mb: scale(self.memory_mb),
        }
    }
}

impl Add for Resources {
    type Output = Resources;
    fn add(self, rhs: Resources) -> Resources {
        Resources {
            vcores: self.vcores + rhs.vcores,
            memory_mb: self.memory_mb + rhs.memory_mb,
        }
    }
}

impl AddAssign for Resources {
    fn add_assign(&mut self, rhs: Resources) {
        *self = *self + rhs;
    }
}

impl Sum for Resources {
    fn sum<I: Iterator<Item = Resources>>(iter: I) -> Resources {
        iter.fold(Resources::ZERO, Add::add)
    }
}

impl fmt::Display for Resources {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<{} vcores, {} MiB>", self.vcores, self.memory_mb)
    }
}

/// True iff `demand` fits into `free` on both components.
pub fn fits(demand: Resources, free: Resources) -> bool {
    demand.fits_in(&free)
}

pub fn vec_add(a: Resources, b: Resources) -> Resources {
    a + b
}

pub fn vec_sub(a: Resources, b: Resources) -> Result<Resources> {
    a.checked_sub(b)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DominantResource {
    VCores,
    Memory,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DominantShare {
    pub share: Share,
    pub dominant_resource: DominantResource,
}

/// The larger of the two per-resource shares of `alloc` relative to `total`.
///
/// Equal shares report [`DominantResource::Memory`].
pub fn dominant_share(alloc: Resources, total: Resources) -> Result<DominantShare> {
    if total.vcores == 0 || total.memory_mb == 0 {
        return Err(Error::config(
            "cluster",
            format!("total capacity {total} has a zero component"),
        ));
    }
    let cpu = Share::new(alloc.vcores, total.vcores);
    let mem = Share::new(alloc.memory_mb, total.memory_mb);
    Ok(if cpu > mem {
        DominantShare {
            share: cpu,
            dominant_resource: DominantResource::VCores,
        }
    } else {
        DominantShare {
            share: mem,
            dominant_resource: DominantResource::Memory,
        }
    })
}
