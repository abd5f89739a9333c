use std::fmt;

use crate::error::{Error, Result};

pub const ACTION_COUNT: usize = 6;

/// Discrete control command. Index 0..=3 are brake levels, 4 coasts, 5 is full throttle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Action(u8);

/// Pedal positions produced by an [`Action`], both in `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Actuators {
    pub throttle: f64,
    pub brake: f64,
}

impl Action {
    pub const FULL_BRAKE: Action = Action(0);
    pub const STRONG_BRAKE: Action = Action(1);
    pub const MODERATE_BRAKE: Action = Action(2);
    pub const LIGHT_BRAKE: Action = Action(3);
    pub const COAST: Action = Action(4);
    pub const ACCELERATE: Action = Action(5);

    pub fn new(index: usize) -> Result<Self> {
        if index < ACTION_COUNT {
            Ok(Action(index as u8))
        } else {
            Err(Error::Validation(format!("action index {index} outside 0..{ACTION_COUNT}")))
        }
    }

    pub fn all() -> impl Iterator<Item = Action> {
        (0..ACTION_COUNT as u8).map(Action)
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn actuators(self) -> Actuators {
        let (throttle, brake) = match self.0 {
            0 => (0.0, 1.0),
            1 => (0.0, 0.7),
            2 => (0.0, 0.4),
            3 => (0.0, 0.2),
            4 => (0.0, 0.0),
            _ => (1.0, 0.0),
        };
        Actuators { throttle, brake }
    }

    pub fn is_brake(self) -> bool {
        self.0 < 4
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "a{}", self.0)
    }
}
