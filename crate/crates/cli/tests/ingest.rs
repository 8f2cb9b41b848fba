use qte_cli::ingest::{parse_csv, write_csv, Schema};
use qte_cli::options::{expand_config, parse_tau_grid};
use qte_cli::CliError;
use qte_core::{generate, DgpKind, DgpSpec};

fn parse(text: &str) -> Result<qte_core::PanelDataset, CliError> {
    parse_csv(text.as_bytes(), &Schema::default())
}

#[test]
fn two_by_two_panel_gets_an_intercept() {
    let d = parse(
        "unit,time,y,x:d,z:age\n\
         a,2001,1.5,0,30\n\
         a,2000,1.0,0,29\n\
         b,2000,2.0,1,40\n\
         b,2001,2.5,1,41\n",
    )
    .unwrap();
    assert_eq!((d.n(), d.periods(), d.dx(), d.dz()), (2, 2, 1, 2));
    assert_eq!(d.unit_ids(), ["a", "b"]);
    assert_eq!(d.period_labels(), ["2000", "2001"]);
    assert_eq!(d.z_names(), ["intercept", "age"]);
    assert_eq!(d.x_names(), ["d"]);
    // rows are placed by sorted time, not file order
    assert_eq!(d.y(0, 0), 1.0);
    assert_eq!(d.z(0, 1), [1.0, 30.0]);
    assert_eq!(d.x(1, 0), [1.0]);
}

#[test]
fn times_sort_numerically() {
    let d = parse("unit,time,y,x:d\n1,10,0,0\n1,9,1,1\n2,9,2,0\n2,10,3,1\n").unwrap();
    assert_eq!(d.period_labels(), ["9", "10"]);
    assert_eq!(d.y(0, 0), 1.0);
}

#[test]
fn missing_cell_is_an_unbalanced_panel() {
    let text = "unit,time,y,x:d\n\
                4,1,0,0\n4,2,0,1\n5,1,1,0\n6,1,1,1\n6,2,0,0\n";
    match parse(text) {
        Err(CliError::UnbalancedPanel(ids)) => assert_eq!(ids, ["5"]),
        other => panic!("{other:?}"),
    }
}

#[test]
fn duplicate_cells_are_rejected() {
    let text = "unit,time,y,x:d\n1,1,0,0\n1,2,0,1\n1,2,5,1\n2,1,1,0\n2,2,1,1\n";
    match parse(text) {
        Err(CliError::DuplicateCell { unit, time }) => {
            assert_eq!((unit.as_str(), time.as_str()), ("1", "2"))
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn non_numeric_cells_report_their_position() {
    let text = "unit,time,y,x:d\n1,1,0,0\n1,2,oops,1\n";
    match parse(text) {
        Err(CliError::NonNumericCell { row, col }) => assert_eq!((row, col.as_str()), (3, "y")),
        other => panic!("{other:?}"),
    }
}

#[test]
fn required_columns_are_checked() {
    assert!(matches!(
        parse("unit,time,x:d\n1,1,0\n"),
        Err(CliError::MissingColumn(c)) if c == "y"
    ));
    assert!(matches!(
        parse("unit,time,y\n1,1,0\n"),
        Err(CliError::MissingColumn(_))
    ));
}

#[test]
fn writing_and_reading_back_is_lossless() {
    for kind in [DgpKind::Sim1, DgpKind::Sim2, DgpKind::Noiseless] {
        let data = generate(&DgpSpec::with_rho_sq(kind, 150, 0.5, 3))
            .unwrap()
            .data;
        let mut buf = Vec::new();
        write_csv(&data, &Schema::default(), &mut buf).unwrap();
        let back = parse_csv(&buf, &Schema::default()).unwrap();
        assert_eq!(back, data);
        for i in 0..data.n() {
            for t in 0..data.periods() {
                assert_eq!(back.y(i, t).to_bits(), data.y(i, t).to_bits());
            }
        }
    }
}

#[test]
fn tau_grid_syntax() {
    let g = parse_tau_grid("0.1:0.9:0.1").unwrap();
    assert_eq!(g, vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]);
    assert_eq!(
        parse_tau_grid("0.25:0.75:0.25").unwrap(),
        vec![0.25, 0.5, 0.75]
    );
    // step that does not divide the range stops short of the end
    assert_eq!(parse_tau_grid("0.1:0.5:0.3").unwrap(), vec![0.1, 0.4]);
    assert_eq!(parse_tau_grid("0.5").unwrap(), vec![0.5]);
    assert_eq!(parse_tau_grid("0.2, 0.6").unwrap(), vec![0.2, 0.6]);
    for bad in ["0.9:0.1:0.1", "0.1:0.9:0", "a:b:c", "0.1:0.2", ""] {
        assert!(parse_tau_grid(bad).is_err(), "{bad}");
    }
}

#[test]
fn config_entries_precede_command_line_flags() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.cfg");
    std::fs::write(&path, "# settings\ntau = 0.5\n\na-min = -1\n").unwrap();
    let args: Vec<String> = [
        "qte",
        "estimate",
        "--config",
        path.to_str().unwrap(),
        "--tau",
        "0.3",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let out = expand_config(args).unwrap();
    assert_eq!(
        out,
        ["qte", "estimate", "--tau=0.5", "--a-min=-1", "--tau", "0.3"]
    );
    std::fs::write(&path, "no separator\n").unwrap();
    assert!(expand_config(vec![
        "qte".into(),
        "estimate".into(),
        "--config".into(),
        path.display().to_string()
    ])
    .is_err());
}
