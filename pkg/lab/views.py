from django.shortcuts import get_object_or_404

from rest_framework import filters, generics, viewsets
from rest_framework.pagination import PageNumberPagination
from rest_framework.response import Response
from rest_framework.views import APIView

from django_filters.rest_framework import DjangoFilterBackend

from lab.filters import CompletedFilter, ExperimentFilter, RunFilter
from lab.models import Experiment, Run
from lab.serializers import ExperimentSerializer, ExperimentSummarySerializer, RunSerializer


class RunPagination(PageNumberPagination):
    page_size = 20
    page_query_param = 'page'
    page_size_query_param = 'size'
    max_page_size = 200


class ExperimentViewSet(viewsets.ReadOnlyModelViewSet):
    queryset = Experiment.objects.prefetch_related('runs').order_by('-created_at')
    serializer_class = ExperimentSerializer
    filter_backends = (DjangoFilterBackend, filters.OrderingFilter)
    filterset_class = ExperimentFilter
    ordering_fields = ('created_at', 'command', 'status')


class RunListAPIView(generics.ListAPIView):
    queryset = Run.objects.select_related('experiment')
    serializer_class = RunSerializer
    filterset_class = RunFilter
    filter_backends = (DjangoFilterBackend, filters.OrderingFilter)
    ordering_fields = ('seed', 'algorithm', 'wall_clock_seconds', 'created_at')
    pagination_class = RunPagination


class CompletedRunListAPIView(RunListAPIView):
    filter_backends = (DjangoFilterBackend, filters.OrderingFilter, CompletedFilter)


class ExperimentSummaryAPIView(APIView):
    serializer_class = ExperimentSummarySerializer

    def get(self, request, pk):
        experiment = get_object_or_404(Experiment.objects.prefetch_related('runs'), pk=pk)
        completed = [run for run in experiment.runs.all()
                     if run.status == Experiment.StatusChoices.COMPLETED]
        scored = [run for run in completed if run.mean_sum_secrecy is not None]
        secrecy = [run.mean_sum_secrecy for run in scored]

        serializer = ExperimentSummarySerializer({
            'experiment': experiment,
            'best_run': max(scored, key=lambda run: run.mean_sum_secrecy, default=None),
            'completed_runs': len(completed),
            'max_sum_secrecy': max(secrecy, default=None),
            'min_sum_secrecy': min(secrecy, default=None),
        })
        return Response(serializer.data)
