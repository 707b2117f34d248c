use lsd2_core::Image;
use lsd2_nn::ops::{conv2d, fuse, upsample2x, upsample2x_backward};
use lsd2_nn::{image_to_tensor, tensor_to_image, Tensor};
use proptest::prelude::*;

fn tensor(shape: [usize; 4]) -> impl Strategy<Value = Tensor<f64>> {
    let n: usize = shape.iter().product();
    prop::collection::vec(-1.0f64..1.0, n).prop_map(move |v| Tensor::from_vec(shape, v).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn fusion_stays_between_its_inputs(
        w in prop::collection::vec(0.0f64..=1.0, 20),
        s in tensor([1, 3, 4, 5]),
        l in tensor([1, 3, 4, 5]),
    ) {
        let w = Tensor::from_vec([1, 1, 4, 5], w).unwrap();
        let f = fuse(&w, &s, &l).unwrap();
        for ((&f, &a), &b) in f.data().iter().zip(s.data()).zip(l.data()) {
            prop_assert!(f >= a.min(b) - 1e-12 && f <= a.max(b) + 1e-12);
        }
    }

    #[test]
    fn convolution_is_linear_in_its_input(
        x in tensor([1, 2, 5, 5]),
        y in tensor([1, 2, 5, 5]),
        w in tensor([3, 2, 3, 3]),
        a in -2.0f64..2.0,
    ) {
        let zero = Tensor::zeros([3, 1, 1, 1]);
        let mut mix = x.clone();
        mix.scale(a);
        mix.add_assign(&y);
        let lhs = conv2d(&mix, &w, &zero).unwrap();
        let mut rhs = conv2d(&x, &w, &zero).unwrap();
        rhs.scale(a);
        rhs.add_assign(&conv2d(&y, &w, &zero).unwrap());
        for (p, q) in lhs.data().iter().zip(rhs.data()) {
            prop_assert!((p - q).abs() < 1e-10);
        }
    }

    #[test]
    fn upsampling_backward_is_its_adjoint(x in tensor([1, 2, 3, 4]), dy in tensor([1, 2, 6, 8])) {
        // <up(x), dy> = <x, up^T(dy)>
        let lhs: f64 = upsample2x(&x).data().iter().zip(dy.data()).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.data().iter().zip(upsample2x_backward(&dy).unwrap().data()).map(|(a, b)| a * b).sum();
        prop_assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn image_tensor_round_trip(v in prop::collection::vec(0.0f32..=1.0, 4 * 3 * 3)) {
        let img = Image::new(4, 3, v).unwrap();
        prop_assert_eq!(tensor_to_image(&image_to_tensor::<f32>(&img)).unwrap(), img);
    }
}
