mod common;

use std::time::{Duration, Instant};

use binflip::model::{sigmoid, ExternalPredictor, PredictError, Predictor};
use common::PREDICTOR;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn stub(args: &[&str], timeout_ms: u64) -> ExternalPredictor {
    let mut command = vec![PREDICTOR];
    command.extend_from_slice(args);
    ExternalPredictor::spawn(&command, Duration::from_millis(timeout_ms)).unwrap()
}

fn random_batch(rng: &mut ChaCha8Rng, width: usize) -> Vec<Vec<f64>> {
    let n = rng.random_range(1..=20);
    (0..n)
        .map(|_| (0..width).map(|_| rng.random_range(-3.0..3.0)).collect())
        .collect()
}

#[test]
fn round_trips_preserve_order_and_values() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let predictor = stub(&[], 5000).with_width(4);
    for _ in 0..100 {
        let batch = random_batch(&mut rng, 4);
        let got = predictor.predict_proba(&batch).unwrap();
        let expected: Vec<f64> = batch.iter().map(|x| sigmoid(x.iter().sum())).collect();
        assert_eq!(got, expected);
    }
}

#[test]
fn constant_and_model_modes() {
    let predictor = stub(&["--constant", "0.25"], 5000);
    assert_eq!(
        predictor.predict_proba(&[vec![1.0], vec![9.0]]).unwrap(),
        vec![0.25, 0.25]
    );

    let fx = common::Fixture::sigmoid_toy();
    let predictor = stub(&["--model", common::path_str(&fx.model)], 5000);
    let model = binflip::synthetic::sigmoid_toy_model();
    let batch = vec![vec![-0.3], vec![0.25], vec![4.0]];
    assert_eq!(
        predictor.predict_proba(&batch).unwrap(),
        model.predict_proba(&batch).unwrap()
    );
}

#[test]
fn empty_batches_do_not_reach_the_process() {
    let predictor = stub(&["--fault", "exit"], 5000);
    assert_eq!(predictor.predict_proba(&[]).unwrap(), Vec::<f64>::new());
}

#[test]
fn width_is_checked_before_sending() {
    let predictor = stub(&[], 5000).with_width(2);
    let err = predictor
        .predict_proba(&[vec![1.0, 2.0], vec![1.0]])
        .unwrap_err();
    assert!(matches!(
        err,
        PredictError::WidthMismatch {
            index: 1,
            expected: 2,
            found: 1
        }
    ));
    assert!(predictor.predict_proba(&[vec![1.0, 2.0]]).is_ok());
}

#[test]
fn short_reply_is_a_length_mismatch() {
    let predictor = stub(&["--fault", "short"], 5000);
    let err = predictor
        .predict_proba(&[vec![0.0], vec![1.0], vec![2.0]])
        .unwrap_err();
    assert!(
        matches!(
            err,
            PredictError::LengthMismatch {
                expected: 3,
                found: 2
            }
        ),
        "{err:?}"
    );
}

#[test]
fn malformed_reply() {
    let predictor = stub(&["--fault", "malformed"], 5000);
    let err = predictor.predict_proba(&[vec![0.0]]).unwrap_err();
    assert!(matches!(err, PredictError::Malformed(_)), "{err:?}");
}

#[test]
fn out_of_range_reply() {
    let predictor = stub(&["--fault", "out-of-range"], 5000);
    let err = predictor
        .predict_proba(&[vec![0.0], vec![1.0]])
        .unwrap_err();
    assert!(
        matches!(err, PredictError::OutOfRange { index: 0, value } if value == 1.5),
        "{err:?}"
    );
}

#[test]
fn wrong_id_poisons_the_channel() {
    let predictor = stub(&["--fault", "wrong-id", "--fault-after", "2"], 5000);
    for _ in 0..2 {
        assert_eq!(predictor.predict_proba(&[vec![0.0]]).unwrap(), vec![0.5]);
    }
    let err = predictor.predict_proba(&[vec![0.0]]).unwrap_err();
    assert!(
        matches!(
            err,
            PredictError::IdMismatch {
                expected: 2,
                found: 3
            }
        ),
        "{err:?}"
    );
    let err = predictor.predict_proba(&[vec![0.0]]).unwrap_err();
    assert!(matches!(err, PredictError::Process(_)), "{err:?}");
}

#[test]
fn hang_times_out_and_poisons() {
    let predictor = stub(&["--fault", "hang"], 300);
    let start = Instant::now();
    let err = predictor.predict_proba(&[vec![0.0]]).unwrap_err();
    assert!(matches!(err, PredictError::Timeout(300)), "{err:?}");
    assert!(start.elapsed() < Duration::from_secs(5));
    let err = predictor.predict_proba(&[vec![0.0]]).unwrap_err();
    assert!(matches!(err, PredictError::Process(_)), "{err:?}");
}

#[test]
fn exiting_process_is_a_process_error() {
    let predictor = stub(&["--fault", "exit", "--fault-after", "1"], 5000);
    assert!(predictor.predict_proba(&[vec![0.0]]).is_ok());
    let err = predictor.predict_proba(&[vec![0.0]]).unwrap_err();
    assert!(matches!(err, PredictError::Process(_)), "{err:?}");
}

#[test]
fn missing_program_fails_to_spawn() {
    let err = ExternalPredictor::spawn(&["/nonexistent/predictor"], Duration::from_secs(1))
        .err()
        .unwrap();
    assert!(matches!(err, PredictError::Process(_)));
}
