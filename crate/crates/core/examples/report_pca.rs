//! Projects dataset compositions onto their principal axes and writes a report.

use inverse_forge::datagen::{build_dataset, BuildOptions, Provenance};
use inverse_forge::evaluation::{emit_report, pca_project, PcaReport, ResultFile};
use inverse_forge::simulator::SimulatorSpec;

fn main() -> inverse_forge::Result<()> {
    let spec = SimulatorSpec::generate(7, 8)?;
    let ds = build_dataset(&spec, &BuildOptions::new(Provenance::Neighborhood, 300, 1))?;
    let rows: Vec<Vec<f64>> = ds.compositions.iter().map(|c| c.0.to_vec()).collect();
    let pca = pca_project(&rows, 2)?;
    println!("explained variance: {:.3}, {:.3}", pca.explained[0], pca.explained[1]);
    let result = ResultFile::Pca(PcaReport {
        explained: pca.explained.clone(),
        dataset: pca.projected.clone(),
        candidates: Vec::new(),
    });
    let out = std::env::temp_dir().join("inverse-forge-report-pca");
    for name in emit_report(&[result], &out)? {
        println!("wrote {}", out.join(name).display());
    }
    Ok(())
}
