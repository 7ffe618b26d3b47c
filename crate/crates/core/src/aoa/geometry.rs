use std::fmt;

use serde::{Deserialize, Serialize};

use super::AoaError;
use crate::dataset_io::NUM_DATA_CHANNELS;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Carrier of each BLE data channel, MHz. Channels 0..=10 sit at
/// 2404..=2424, channels 11..=36 at 2428..=2478 (2402, 2426 and 2480 are
/// the advertising channels).
pub const BLE_DATA_CHANNEL_MHZ: [f64; NUM_DATA_CHANNELS] = [
    2404.0, 2406.0, 2408.0, 2410.0, 2412.0, 2414.0, 2416.0, 2418.0, 2420.0, 2422.0, 2424.0,
    2428.0, 2430.0, 2432.0, 2434.0, 2436.0, 2438.0, 2440.0, 2442.0, 2444.0, 2446.0, 2448.0,
    2450.0, 2452.0, 2454.0, 2456.0, 2458.0, 2460.0, 2462.0, 2464.0, 2466.0, 2468.0, 2470.0,
    2472.0, 2474.0, 2476.0, 2478.0,
];

/// Design frequency for the default element spacing.
pub const DESIGN_FREQUENCY_HZ: f64 = 2.44e9;

/// One of the two orthogonal three-element ULAs on the receiver board.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum SubArray {
    One,
    Two,
}

impl SubArray {
    /// Sub-arrays alternate per packet: even `idx` samples sub-array 1.
    pub fn from_idx(idx: u64) -> Self {
        if idx % 2 == 0 {
            SubArray::One
        } else {
            SubArray::Two
        }
    }

    pub fn index(self) -> usize {
        match self {
            SubArray::One => 0,
            SubArray::Two => 1,
        }
    }

    pub fn other(self) -> Self {
        match self {
            SubArray::One => SubArray::Two,
            SubArray::Two => SubArray::One,
        }
    }
}

impl From<SubArray> for u8 {
    fn from(s: SubArray) -> u8 {
        s.index() as u8 + 1
    }
}

impl TryFrom<u8> for SubArray {
    type Error = String;
    fn try_from(v: u8) -> Result<Self, String> {
        match v {
            1 => Ok(SubArray::One),
            2 => Ok(SubArray::Two),
            _ => Err(format!("sub-array must be 1 or 2, got {v}")),
        }
    }
}

impl fmt::Display for SubArray {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", u8::from(*self))
    }
}

/// Receiver array description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArrayGeometry {
    /// Elements per sub-array.
    pub elements: usize,
    /// Element spacing, meters.
    pub spacing: f64,
    /// Azimuth of each sub-array's normal relative to device boresight, degrees.
    pub orientations: [f64; 2],
    pub speed_of_light: f64,
    /// Carrier frequency of channels 0..=36, Hz.
    pub channel_freq_hz: Vec<f64>,
}

impl Default for ArrayGeometry {
    fn default() -> Self {
        Self {
            elements: 3,
            spacing: SPEED_OF_LIGHT / DESIGN_FREQUENCY_HZ / 2.0,
            orientations: [45.0, -45.0],
            speed_of_light: SPEED_OF_LIGHT,
            channel_freq_hz: BLE_DATA_CHANNEL_MHZ.iter().map(|f| f * 1e6).collect(),
        }
    }
}

impl ArrayGeometry {
    pub fn with_spacing(spacing: f64) -> Self {
        Self {
            spacing,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), AoaError> {
        if !(self.spacing > 0.0) || self.elements < 2 {
            return Err(AoaError::InvalidGeometry("spacing must be > 0 and elements >= 2".into()));
        }
        if self.channel_freq_hz.len() != NUM_DATA_CHANNELS
            || self.channel_freq_hz.iter().any(|f| !(*f > 0.0))
        {
            return Err(AoaError::InvalidGeometry("channel map must cover all 37 data channels".into()));
        }
        Ok(())
    }

    pub fn carrier(&self, channel: u8) -> Result<f64, AoaError> {
        self.channel_freq_hz
            .get(channel as usize)
            .copied()
            .ok_or(AoaError::UnknownChannel(channel))
    }

    /// Inter-element phase step per unit of cos θ: 2π f d / c.
    pub fn phase_scale(&self, channel: u8) -> Result<f64, AoaError> {
        Ok(2.0 * std::f64::consts::PI * self.carrier(channel)? * self.spacing / self.speed_of_light)
    }

    /// Azimuth (device frame) of the element 1 → element n direction; θ_ULA
    /// is measured from it. Sub-array 2 is numbered mirror-wise, so its axis
    /// sits on the other side of its normal.
    pub fn axis_azimuth(&self, sub_array: SubArray) -> f64 {
        match sub_array {
            SubArray::One => self.orientations[0] - 90.0,
            SubArray::Two => self.orientations[1] + 90.0,
        }
    }

    /// True θ_ULA of a direction given in device azimuth/elevation, degrees.
    pub fn ula_angle(&self, sub_array: SubArray, azimuth: f64, elevation: f64) -> f64 {
        let c = elevation.to_radians().cos() * (azimuth - self.axis_azimuth(sub_array)).to_radians().cos();
        c.clamp(-1.0, 1.0).acos().to_degrees()
    }
}

/// Per (sub-array, antenna, channel) phase offsets, radians.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTable {
    /// `offsets[sub_array][antenna][channel]`.
    pub offsets: [Vec<Vec<f64>>; 2],
}

impl CalibrationTable {
    pub fn zeros(antennas: usize) -> Self {
        let table = vec![vec![0.0; NUM_DATA_CHANNELS]; antennas];
        Self {
            offsets: [table.clone(), table],
        }
    }

    pub fn offset(&self, sub_array: SubArray, antenna: usize, channel: u8) -> f64 {
        self.offsets[sub_array.index()]
            .get(antenna)
            .and_then(|row| row.get(channel as usize))
            .copied()
            .unwrap_or(0.0)
    }

    pub fn validate(&self, antennas: usize) -> Result<(), AoaError> {
        for table in &self.offsets {
            if table.len() != antennas
                || table
                    .iter()
                    .any(|row| row.len() != NUM_DATA_CHANNELS || row.iter().any(|x| !x.is_finite()))
            {
                return Err(AoaError::InvalidCalibration);
            }
        }
        Ok(())
    }

    /// Loads a JSON table `{"offsets": [[[..37..] per antenna], [..]]}`.
    pub fn from_json(bytes: &[u8], antennas: usize) -> Result<Self, AoaError> {
        let table: Self = serde_json::from_slice(bytes).map_err(|_| AoaError::InvalidCalibration)?;
        table.validate(antennas)?;
        Ok(table)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn channel_plan() {
        assert_eq!(BLE_DATA_CHANNEL_MHZ[0], 2404.0);
        assert_eq!(BLE_DATA_CHANNEL_MHZ[10], 2424.0);
        assert_eq!(BLE_DATA_CHANNEL_MHZ[11], 2428.0);
        assert_eq!(BLE_DATA_CHANNEL_MHZ[17], 2440.0);
        assert_eq!(BLE_DATA_CHANNEL_MHZ[36], 2478.0);
        assert!(BLE_DATA_CHANNEL_MHZ.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn default_spacing_is_half_wavelength() {
        let g = ArrayGeometry::default();
        assert!((g.spacing - 0.061432880737704918).abs() < 1e-15);
        assert!(g.validate().is_ok());
        // at 2440 MHz d = λ/2, so the phase step is π cos θ
        assert!((g.phase_scale(17).unwrap() - std::f64::consts::PI).abs() < 1e-12);
        assert!(g.carrier(37).is_err());
    }

    #[test]
    fn ula_angle_matches_remap_convention() {
        let g = ArrayGeometry::default();
        for az in [-45.0, 0.0, 45.0, 90.0, 135.0] {
            assert!((g.ula_angle(SubArray::One, az, 0.0) - (az + 45.0)).abs() < 1e-9);
        }
        for az in [-135.0, -90.0, 0.0, 45.0] {
            assert!((g.ula_angle(SubArray::Two, az, 0.0) - (45.0 - az)).abs() < 1e-9);
        }
        // elevation pulls the cone angle toward broadside
        assert!(g.ula_angle(SubArray::One, 0.0, 30.0) > 45.0);
    }

    #[test]
    fn sub_array_serde() {
        assert_eq!(serde_json::to_string(&SubArray::Two).unwrap(), "2");
        assert_eq!(serde_json::from_str::<SubArray>("1").unwrap(), SubArray::One);
        assert!(serde_json::from_str::<SubArray>("3").is_err());
    }

    #[test]
    fn calibration_loading() {
        let zeros = CalibrationTable::zeros(3);
        let json = serde_json::to_vec(&zeros).unwrap();
        assert_eq!(CalibrationTable::from_json(&json, 3).unwrap(), zeros);
        assert!(CalibrationTable::from_json(&json, 2).is_err());
        assert!(CalibrationTable::from_json(b"{}", 3).is_err());
    }
}
