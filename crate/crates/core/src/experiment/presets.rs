//! Built-in configurations, each with a reduced `-ci-small` variant.

use super::config::*;
use crate::channel::FadingMode;
use crate::detect::DetectorKind;

#[derive(Debug, Clone, PartialEq)]
pub struct Preset {
    pub name: &'static str,
    pub command: Command,
    pub summary: &'static str,
    pub config: ExperimentConfig,
}

pub const PRESET_NAMES: &[&str] = &[
    "ci-small",
    "fig2",
    "fig2-ci-small",
    "fig4",
    "fig4-ci-small",
    "fig5",
    "fig5-ci-small",
    "fig6qam",
    "fig6qam-ci-small",
    "fig8",
    "fig8-ci-small",
    "fig9",
    "fig9-ci-small",
    "fig11",
    "fig11-ci-small",
    "fig12",
    "fig12-ci-small",
    "fig13",
    "fig13-ci-small",
    "fig15",
    "fig15-ci-small",
];

fn base(n_t: usize, n_r: usize, modulation: usize) -> ExperimentConfig {
    ExperimentConfig {
        seed: 1,
        system: SystemConfig { n_t, n_r, modulation, fading: FadingMode::PerUse },
        code: None,
        detector: DetectorConfig::default(),
        channel: ChannelConfig::default(),
        sweep: SweepConfig::default(),
        stop: StopConfig::default(),
        decoder: DecoderConfig::default(),
        de: DeSection::default(),
        capacity: CapacitySection::default(),
        ksdelta: KsDeltaSection::default(),
        flops: FlopsSection::default(),
    }
}

fn code(coded_bits: Option<usize>, info_bits: Option<usize>, d_c: usize, rates: &[&str]) -> Option<CodeConfig> {
    Some(CodeConfig {
        m: 8,
        polynomial: None,
        n_symbols: None,
        coded_bits,
        info_bits,
        d_c,
        rate: rates.iter().map(|r| r.to_string()).collect(),
        seed: 1,
        matrix_file: None,
    })
}

fn kinds(k: &[DetectorKind]) -> DetectorConfig {
    DetectorConfig { kind: k.to_vec() }
}

use DetectorKind::{MfExact, MfSimplified, Mmse};

pub fn preset(name: &str) -> Option<Preset> {
    let (command, summary, config) = match name {
        "ci-small" => {
            let mut c = base(16, 16, 2);
            c.code = code(None, None, 3, &[]);
            c.code.as_mut().unwrap().n_symbols = Some(48);
            c.sweep = SweepConfig::list(&[60.0]);
            c.stop = StopConfig { min_frame_errors: 1, max_frames: 32, ..StopConfig::default() };
            (Command::Ber, "noiseless sanity run: 16x16 BPSK at 60 dB decodes every frame", c)
        }
        "fig2" | "fig2-ci-small" => {
            let small = name.ends_with("ci-small");
            let mut c = if small { base(64, 64, 2) } else { base(800, 800, 2) };
            c.detector = kinds(&[Mmse, MfExact, MfSimplified]);
            c.sweep = if small { SweepConfig::range(-10.0, -2.0, 4.0) } else { SweepConfig::range(-10.0, 10.0, 2.0) };
            c.stop = StopConfig { min_bit_errors: if small { 200 } else { 2000 }, max_uses: if small { 200 } else { 100_000 }, ..StopConfig::default() };
            (Command::Uncoded, "uncoded BER of MMSE and matched-filter detection, BPSK", c)
        }
        "fig4" | "fig4-ci-small" => {
            let small = name.ends_with("ci-small");
            let mut c = if small { base(32, 32, 2) } else { base(200, 200, 2) };
            c.code = code(Some(2400), None, 4, &[]);
            c.sweep = if small { SweepConfig::list(&[0.0, 4.0]) } else { SweepConfig::range(-3.0, 1.0, 0.25) };
            if small {
                c.code.as_mut().unwrap().coded_bits = Some(480);
                c.stop = StopConfig { min_frame_errors: 5, max_frames: 32, ..StopConfig::default() };
                c.decoder.l_max = 50;
            }
            (Command::Ber, "R=1/2 coded 200x200 BPSK with MMSE detection, n=2400 bits", c)
        }
        "fig5" | "fig5-ci-small" | "fig6qam" | "fig6qam-ci-small" => {
            let small = name.ends_with("ci-small");
            let half = name.starts_with("fig6qam");
            let mut c = if small { base(32, 32, 16) } else { base(600, 600, 16) };
            c.code = code(Some(2400), None, if half { 4 } else { 3 }, &[]);
            c.sweep = match (small, half) {
                (true, _) => SweepConfig::list(&[10.0, 20.0]),
                (false, false) => SweepConfig::range(6.0, 12.0, 0.5),
                (false, true) => SweepConfig::range(10.0, 18.0, 0.5),
            };
            if small {
                c.code.as_mut().unwrap().coded_bits = Some(480);
                c.stop = StopConfig { min_frame_errors: 5, max_frames: 16, ..StopConfig::default() };
                c.decoder.l_max = 50;
            }
            let s = if half {
                "R=1/2 coded 600x600 16-QAM with MMSE detection, n=2400 bits"
            } else {
                "R=1/3 coded 600x600 16-QAM with MMSE detection, n=2400 bits"
            };
            (Command::Ber, s, c)
        }
        "fig8" | "fig8-ci-small" => {
            let small = name.ends_with("ci-small");
            let mut c = base(200, 200, 2);
            c.ksdelta = KsDeltaSection { realizations: if small { 2000 } else { 100_000 }, ..KsDeltaSection::default() };
            (Command::KsDelta, "Gaussianity of the exact matched-filter interference-plus-noise power", c)
        }
        "fig9" | "fig9-ci-small" => {
            let small = name.ends_with("ci-small");
            let mut c = if small { base(32, 32, 2) } else { base(200, 200, 2) };
            c.code = code(None, Some(800), 3, &["1/3", "1/6", "1/9", "1/12"]);
            c.de = DeSection {
                gamma0_db: vec![-3.0, -6.0, -7.5, -8.5],
                detector: MfSimplified,
                ..DeSection::default()
            };
            c.capacity.trials = 1000;
            if small {
                c.code.as_mut().unwrap().rate = vec!["1/3".into(), "1/6".into()];
                c.code.as_mut().unwrap().m = 4;
                c.de = DeSection {
                    ensemble: 10_000,
                    l_max: 500,
                    gamma0_db: vec![0.0, -3.0],
                    step_db: 0.5,
                    h_stop: 1e-6,
                    max_points: 40,
                    detector: MfSimplified,
                };
                c.capacity.trials = 200;
            }
            (Command::Threshold, "density-evolution thresholds for rates 1/3 to 1/12, 200x200 BPSK", c)
        }
        "fig11" | "fig11-ci-small" => {
            let mut c = base(200, 200, 2);
            c.flops = FlopsSection {
                n_r: if name == "fig11" { (1..=20).map(|i| i * 50).collect() } else { vec![8, 200] },
                modulation: vec![2, 4, 16],
            };
            (Command::Flops, "closed-form flops per vector against receive antennas", c)
        }
        "fig12" | "fig12-ci-small" => {
            let small = name.ends_with("ci-small");
            let mut c = if small { base(32, 32, 2) } else { base(200, 200, 2) };
            c.code = code(Some(2400), None, 3, &[]);
            c.detector = kinds(&[Mmse, MfSimplified]);
            c.channel.sigma2_e = vec![0.0, 0.1, 0.2];
            c.sweep = if small { SweepConfig::list(&[2.0]) } else { SweepConfig::range(-5.0, 0.0, 0.25) };
            if small {
                c.code.as_mut().unwrap().coded_bits = Some(480);
                c.stop = StopConfig { min_frame_errors: 5, max_frames: 16, ..StopConfig::default() };
                c.decoder.l_max = 50;
            }
            (Command::Ber, "R=1/3 coded 200x200 BPSK under channel estimation error", c)
        }
        "fig13" | "fig13-ci-small" => {
            let small = name.ends_with("ci-small");
            let mut c = if small { base(64, 64, 2) } else { base(600, 600, 2) };
            c.channel.rho = vec![0.0, 0.3, 0.4, 0.5];
            c.sweep = SweepConfig::list(&[-20.0, -15.0, -11.0, -10.0, -5.0, 0.0, 5.0, 10.0]);
            c.capacity.trials = if small { 100 } else { 1000 };
            (Command::Capacity, "ergodic capacity of exponentially correlated channels", c)
        }
        "fig15" | "fig15-ci-small" => {
            let small = name.ends_with("ci-small");
            let mut c = if small { base(48, 48, 2) } else { base(600, 600, 2) };
            c.code = code(None, Some(800), 3, &["1/9"]);
            c.detector = kinds(&[MfSimplified]);
            c.channel.rho = vec![0.0, 0.3, 0.4, 0.5];
            c.sweep = if small { SweepConfig::list(&[0.0]) } else { SweepConfig::range(-11.0, -6.0, 0.25) };
            if small {
                c.code.as_mut().unwrap().info_bits = Some(160);
                c.stop = StopConfig { min_frame_errors: 5, max_frames: 16, ..StopConfig::default() };
                c.decoder.l_max = 50;
            }
            (Command::Ber, "R=1/9 coded 600x600 BPSK on correlated channels, matched-filter detection", c)
        }
        _ => return None,
    };
    Some(Preset { name: PRESET_NAMES.iter().find(|&&n| n == name).copied()?, command, summary, config })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_validates_for_its_command() {
        for name in PRESET_NAMES {
            let p = preset(name).unwrap_or_else(|| panic!("{name} missing"));
            p.config.validate(p.command).unwrap_or_else(|e| panic!("{name}: {e}"));
            let text = p.config.to_toml();
            assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), p.config, "{name}");
        }
        assert!(preset("fig99").is_none());
    }

    #[test]
    fn preset_spectral_efficiencies() {
        let se = |name: &str| {
            let p = preset(name).unwrap();
            let rates = p.config.code.as_ref().unwrap().rates().unwrap();
            rates.iter().map(|&r| p.config.spectral_efficiency(r)).collect::<Vec<_>>()
        };
        assert_eq!(se("fig4"), vec![100.0]);
        assert_eq!(se("fig5"), vec![800.0]);
        assert_eq!(se("fig6qam"), vec![1200.0]);
        assert!((se("fig15")[0] - 66.666_666_666_666_67).abs() < 1e-9);
    }
}
