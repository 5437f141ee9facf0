use std::path::Path;

use crate::error::Result;
use crate::exec::Execution;
use crate::scenario::iq::IqReader;
use crate::scenario::{Components, Scenario};
use crate::signal::num_complex::Complex64;

/// Random-access sample stream.
pub trait SampleSource {
    fn sample_rate(&self) -> f64;
    /// Total samples.
    fn len(&self) -> u64;
    /// Fills `out` with samples `first..first + out.len()`.
    fn read(&mut self, first: u64, out: &mut [Complex64]) -> Result<()>;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Composes a scenario on demand.
pub struct ScenarioSource<'a> {
    scenario: &'a Scenario,
    exec: Execution,
}

impl<'a> ScenarioSource<'a> {
    pub fn new(scenario: &'a Scenario, exec: Execution) -> Self {
        ScenarioSource { scenario, exec }
    }
}

impl SampleSource for ScenarioSource<'_> {
    fn sample_rate(&self) -> f64 {
        self.scenario.sample_rate()
    }

    fn len(&self) -> u64 {
        self.scenario.num_samples() as u64
    }

    fn read(&mut self, first: u64, out: &mut [Complex64]) -> Result<()> {
        self.scenario.compose_range(first, out, Components::ALL, self.exec);
        Ok(())
    }
}

/// Reads an IQ file.
pub struct IqFileSource {
    reader: IqReader,
}

impl IqFileSource {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        Ok(IqFileSource {
            reader: IqReader::open(path)?,
        })
    }
}

impl SampleSource for IqFileSource {
    fn sample_rate(&self) -> f64 {
        self.reader.sample_rate()
    }

    fn len(&self) -> u64 {
        self.reader.len() as u64
    }

    fn read(&mut self, first: u64, out: &mut [Complex64]) -> Result<()> {
        if self.reader.position() as u64 != first {
            self.reader.seek(first as usize)?;
        }
        let chunk = self.reader.read_chunk(out.len())?;
        for (o, s) in out.iter_mut().zip(chunk.iter()) {
            *o = Complex64::new(s.re as f64, s.im as f64);
        }
        out[chunk.len()..].fill(Complex64::new(0.0, 0.0));
        Ok(())
    }
}
